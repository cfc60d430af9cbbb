#include "dsn/image.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <opencv2/imgcodecs.hpp>

#include "dsn/common.hpp"
#include "dsn/rng.hpp"

namespace fs = std::filesystem;

namespace dsn {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::IoError, "cannot open manifest " + path);

    DatasetManifest m;
    m.name = fs::path(path).stem().string();
    m.base_dir = fs::path(path).parent_path().string();

    std::string header;
    if (!std::getline(in, header)) raise(Errc::EmptyManifest, "manifest has no header: " + path);
    if (header.size() >= 3 && static_cast<unsigned char>(header[0]) == 0xEF) header = header.substr(3);

    auto cols = split_csv_line(header);
    int col_path = -1, col_score = -1, col_dist = -1, col_ref = -1;
    for (int i = 0; i < static_cast<int>(cols.size()); ++i) {
        const std::string c = trim(cols[static_cast<std::size_t>(i)]);
        if (c == "image_path") col_path = i;
        else if (c == "score") col_score = i;
        else if (c == "distortion_type") col_dist = i;
        else if (c == "reference_id") col_ref = i;
    }
    if (col_path < 0) raise(Errc::MissingColumn, "manifest header lacks image_path: " + path);
    if (col_score < 0) raise(Errc::MissingColumn, "manifest header lacks score: " + path);

    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto f = split_csv_line(line);
        auto field = [&](int idx) -> std::string {
            return idx >= 0 && idx < static_cast<int>(f.size()) ? trim(f[static_cast<std::size_t>(idx)]) : "";
        };
        ManifestEntry e;
        e.image_path = field(col_path);
        const std::string score_str = field(col_score);
        try {
            std::size_t pos = 0;
            e.score = std::stod(score_str, &pos);
            if (pos != score_str.size()) throw std::invalid_argument(score_str);
        } catch (const std::exception&) {
            raise(Errc::UnparsableScore,
                  "line " + std::to_string(line_no) + " of " + path + ": '" + score_str + "'");
        }
        if (!std::isfinite(e.score))
            raise(Errc::UnparsableScore, "non-finite score at line " + std::to_string(line_no));
        if (const std::string d = field(col_dist); !d.empty()) e.distortion_type = d;
        if (const std::string r = field(col_ref); !r.empty()) e.reference_id = r;
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) raise(Errc::EmptyManifest, path + " has zero data rows");

    double lo = m.entries.front().score, hi = lo;
    for (const auto& e : m.entries) {
        lo = std::min(lo, e.score);
        hi = std::max(hi, e.score);
        const fs::path p = fs::path(e.image_path).is_absolute()
                               ? fs::path(e.image_path)
                               : fs::path(m.base_dir) / e.image_path;
        if (!fs::exists(p)) raise(Errc::IoError, "manifest references missing file " + p.string());
    }
    m.score_scale = {lo, hi};
    return m;
}

std::string resolve_entry_path(const DatasetManifest& manifest, const ManifestEntry& entry) {
    const fs::path p(entry.image_path);
    if (p.is_absolute()) return p.string();
    return (fs::path(manifest.base_dir) / p).string();
}

ImageSample decode_image(const std::string& path) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) raise(Errc::IoError, "cannot decode image " + path);

    ImageSample s;
    s.source_path = path;
    s.pixels = Tensor({3, bgr.rows, bgr.cols});
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            s.pixels.at(0, y, x) = row[x][2] / 255.0;
            s.pixels.at(1, y, x) = row[x][1] / 255.0;
            s.pixels.at(2, y, x) = row[x][0] / 255.0;
        }
    }
    return s;
}

ImageSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry, AccessLog* log) {
    const std::string path = resolve_entry_path(manifest, entry);
    if (log) log->record(path);
    ImageSample s = decode_image(path);
    s.score = entry.score;
    s.distortion_type = entry.distortion_type;
    s.reference_id = entry.reference_id;
    return s;
}

std::vector<ImageSample> load_samples(const DatasetManifest& manifest, AccessLog* log) {
    std::vector<ImageSample> out;
    out.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) out.push_back(load_sample(manifest, e, log));
    return out;
}

ImageSample random_crop(const ImageSample& sample, int crop_h, int crop_w, std::uint64_t seed) {
    const int h = sample.height(), w = sample.width();
    if (crop_h > h || crop_w > w)
        raise(Errc::CropTooLarge, std::to_string(crop_h) + "x" + std::to_string(crop_w) +
                                      " from " + std::to_string(h) + "x" + std::to_string(w));
    if (crop_h < 1 || crop_w < 1) raise(Errc::InvalidConfig, "crop size must be positive");

    Rng rng(seed);
    const int oy = rng.bounded_int(h - crop_h + 1);
    const int ox = rng.bounded_int(w - crop_w + 1);

    ImageSample out;
    out.score = sample.score;
    out.distortion_type = sample.distortion_type;
    out.reference_id = sample.reference_id;
    out.source_path = sample.source_path;
    out.pixels = Tensor({3, crop_h, crop_w});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < crop_h; ++y)
            for (int x = 0; x < crop_w; ++x) out.pixels.at(c, y, x) = sample.pixels.at(c, oy + y, ox + x);
    return out;
}

void write_image_png(const std::string& path, const Tensor& rgb_chw) {
    if (rgb_chw.ndim() != 3 || rgb_chw.dim(0) != 3) raise(Errc::DimMismatch, "expected {3,H,W} image");
    const int h = rgb_chw.dim(1), w = rgb_chw.dim(2);
    cv::Mat bgr(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y) {
        auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(rgb_chw.at(c, y, x), 0.0, 1.0);
                row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
        }
    }
    if (!cv::imwrite(path, bgr)) raise(Errc::IoError, "cannot write " + path);
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

}  // namespace

void write_manifest_csv(const std::string& path, const DatasetManifest& manifest) {
    std::ofstream os(path);
    if (!os) raise(Errc::IoError, "cannot open for writing: " + path);
    os << "image_path,score,distortion_type,reference_id\n";
    for (const ManifestEntry& e : manifest.entries) {
        const std::string abs = fs::absolute(resolve_entry_path(manifest, e)).string();
        os << csv_field(abs) << ',' << format_real(e.score) << ','
           << csv_field(e.distortion_type.value_or("")) << ','
           << csv_field(e.reference_id.value_or("")) << '\n';
    }
    if (!os) raise(Errc::IoError, "failed writing: " + path);
}

}  // namespace dsn
