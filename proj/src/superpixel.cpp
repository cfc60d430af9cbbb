#include "dsn/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "dsn/common.hpp"

namespace dsn {

namespace {

constexpr char kBlobMagic[5] = {'S', 'P', 'X', 'L', '1'};

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    if (t > delta * delta * delta) return std::cbrt(t);
    return t / (3.0 * delta * delta) + 4.0 / 29.0;
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, double v) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(os, bits);
}

double get_f32(std::istream& is) {
    std::uint32_t bits = get_u32(is);
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    double hh = h * 6.0;
    int sector = static_cast<int>(hh) % 6;
    double f = hh - std::floor(hh);
    double p = v * (1.0 - s);
    double q = v * (1.0 - s * f);
    double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

struct LabImage {
    std::vector<double> l, a, b;
};

LabImage to_lab(const ImageSample& image) {
    const int h = image.height(), w = image.width();
    LabImage lab;
    lab.l.resize(static_cast<std::size_t>(h) * w);
    lab.a.resize(lab.l.size());
    lab.b.resize(lab.l.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            rgb_to_lab(image.pixels.at(0, y, x), image.pixels.at(1, y, x),
                       image.pixels.at(2, y, x), lab.l[i], lab.a[i], lab.b[i]);
        }
    }
    return lab;
}

}  // namespace

void rgb_to_lab(double r, double g, double b, double& l_out, double& a_out, double& b_out) {
    const double rl = srgb_to_linear(r);
    const double gl = srgb_to_linear(g);
    const double bl = srgb_to_linear(b);
    const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    const double fx = lab_f(x / 0.95047);
    const double fy = lab_f(y / 1.0);
    const double fz = lab_f(z / 1.08883);
    l_out = 116.0 * fy - 16.0;
    a_out = 500.0 * (fx - fy);
    b_out = 200.0 * (fy - fz);
}

std::vector<int> SegmenterConfig::resolved_cnn_channels() const {
    std::vector<int> ch = cnn_channels.empty() ? std::vector<int>{32, 64, 64, 32} : cnn_channels;
    ch.push_back(n_superpixels);
    return ch;
}

void SegmenterConfig::validate() const {
    if (n_superpixels < 2) raise(Errc::InvalidConfig, "n_superpixels must be at least 2");
    if (slic_compactness <= 0.0) raise(Errc::InvalidConfig, "slic_compactness must be positive");
    if (slic_iterations < 1) raise(Errc::InvalidConfig, "slic_iterations must be at least 1");
    if (!cnn_channels.empty()) {
        if (cnn_channels.size() != 4)
            raise(Errc::InvalidConfig, "cnn_channels must list the four hidden layer widths");
        for (int c : cnn_channels)
            if (c < 1) raise(Errc::InvalidConfig, "cnn_channels entries must be positive");
    }
    if (tv_weight < 0.0) raise(Errc::InvalidConfig, "tv_weight must be non-negative");
}

SlicSeedGrid slic_seed_grid(int width, int height, int n_superpixels) {
    // Exact factorization nx*ny = N, choosing the pair whose grid cells are
    // closest to square; ties prefer more columns.
    int best_nx = -1, best_ny = -1;
    double best_aspect = std::numeric_limits<double>::infinity();
    for (int nx = 1; nx <= n_superpixels; ++nx) {
        if (n_superpixels % nx != 0) continue;
        const int ny = n_superpixels / nx;
        if (nx > width || ny > height) continue;
        const double cw = static_cast<double>(width) / nx;
        const double ch = static_cast<double>(height) / ny;
        const double aspect = std::max(cw, ch) / std::min(cw, ch);
        if (aspect < best_aspect - 1e-12 ||
            (std::abs(aspect - best_aspect) <= 1e-12 && nx > best_nx)) {
            best_aspect = aspect;
            best_nx = nx;
            best_ny = ny;
        }
    }
    if (best_nx < 0)
        raise(Errc::InvalidConfig, "n_superpixels admits no seed grid for this image size");
    SlicSeedGrid grid;
    grid.nx = best_nx;
    grid.ny = best_ny;
    grid.x.resize(static_cast<std::size_t>(n_superpixels));
    grid.y.resize(static_cast<std::size_t>(n_superpixels));
    for (int iy = 0; iy < best_ny; ++iy) {
        for (int ix = 0; ix < best_nx; ++ix) {
            const int label = iy * best_nx + ix;
            grid.x[label] = (ix + 0.5) * static_cast<double>(width) / best_nx;
            grid.y[label] = (iy + 0.5) * static_cast<double>(height) / best_ny;
        }
    }
    return grid;
}

std::vector<std::int32_t> slic_segment_labels(const ImageSample& image,
                                              const SegmenterConfig& config) {
    config.validate();
    const int h = image.height(), w = image.width();
    const int n = config.n_superpixels;
    if (n > h * w) raise(Errc::InvalidConfig, "n_superpixels exceeds pixel count");

    const LabImage lab = to_lab(image);
    const SlicSeedGrid grid = slic_seed_grid(w, h, n);
    const double step = std::sqrt(static_cast<double>(h) * w / n);
    const double spatial_weight =
        (config.slic_compactness / step) * (config.slic_compactness / step);

    struct Center {
        double l, a, b, x, y;
    };
    std::vector<Center> centers(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const int px = std::clamp<int>(static_cast<int>(std::lround(grid.x[k])), 0, w - 1);
        const int py = std::clamp<int>(static_cast<int>(std::lround(grid.y[k])), 0, h - 1);
        const std::size_t i = static_cast<std::size_t>(py) * w + px;
        centers[k] = {lab.l[i], lab.a[i], lab.b[i], grid.x[k], grid.y[k]};
    }

    std::vector<std::int32_t> labels(static_cast<std::size_t>(h) * w, -1);
    std::vector<double> best(labels.size());
    const int window = std::max(1, static_cast<int>(std::ceil(2.0 * step)));

    for (int it = 0; it < config.slic_iterations; ++it) {
        std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
        std::vector<std::int32_t> next(labels.size(), -1);
        for (int k = 0; k < n; ++k) {
            const Center& c = centers[k];
            const int x0 = std::max(0, static_cast<int>(std::floor(c.x)) - window);
            const int x1 = std::min(w - 1, static_cast<int>(std::floor(c.x)) + window);
            const int y0 = std::max(0, static_cast<int>(std::floor(c.y)) - window);
            const int y1 = std::min(h - 1, static_cast<int>(std::floor(c.y)) + window);
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * w + x;
                    const double dl = lab.l[i] - c.l;
                    const double da = lab.a[i] - c.a;
                    const double db = lab.b[i] - c.b;
                    const double dx = x - c.x;
                    const double dy = y - c.y;
                    const double d =
                        dl * dl + da * da + db * db + spatial_weight * (dx * dx + dy * dy);
                    if (d < best[i]) {
                        best[i] = d;
                        next[i] = static_cast<std::int32_t>(k);
                    }
                }
            }
        }
        // Pixels outside every search window fall back to a full scan.
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                if (next[i] >= 0) continue;
                for (int k = 0; k < n; ++k) {
                    const Center& c = centers[k];
                    const double dl = lab.l[i] - c.l;
                    const double da = lab.a[i] - c.a;
                    const double db = lab.b[i] - c.b;
                    const double dx = x - c.x;
                    const double dy = y - c.y;
                    const double d =
                        dl * dl + da * da + db * db + spatial_weight * (dx * dx + dy * dy);
                    if (d < best[i]) {
                        best[i] = d;
                        next[i] = static_cast<std::int32_t>(k);
                    }
                }
            }
        }
        const bool converged = (next == labels);
        labels = std::move(next);
        if (converged) break;

        std::vector<Center> sums(static_cast<std::size_t>(n), {0, 0, 0, 0, 0});
        std::vector<std::int64_t> counts(static_cast<std::size_t>(n), 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                const int k = labels[i];
                sums[k].l += lab.l[i];
                sums[k].a += lab.a[i];
                sums[k].b += lab.b[i];
                sums[k].x += x;
                sums[k].y += y;
                ++counts[k];
            }
        }
        for (int k = 0; k < n; ++k) {
            if (counts[k] == 0) continue;  // empty cluster keeps its center
            const double inv = 1.0 / static_cast<double>(counts[k]);
            centers[k] = {sums[k].l * inv, sums[k].a * inv, sums[k].b * inv, sums[k].x * inv,
                          sums[k].y * inv};
        }
    }
    return labels;
}

CnnSegmenterParams init_cnn_segmenter(const SegmenterConfig& config, Rng& rng) {
    config.validate();
    CnnSegmenterParams params;
    params.channels = config.resolved_cnn_channels();
    int in_ch = 3;
    for (std::size_t layer = 0; layer < params.channels.size(); ++layer) {
        const int out_ch = params.channels[layer];
        nn::ParamTensor w;
        w.name = "seg.conv" + std::to_string(layer) + ".weight";
        w.value = Tensor({out_ch, in_ch, 3, 3});
        nn::init_kaiming(w, in_ch * 9, rng);
        w.grad = Tensor::zeros(w.value.shape());
        nn::ParamTensor b;
        b.name = "seg.conv" + std::to_string(layer) + ".bias";
        b.value = Tensor::zeros({out_ch});
        b.grad = Tensor::zeros({out_ch});
        params.weights.push_back(std::move(w));
        params.biases.push_back(std::move(b));
        in_ch = out_ch;
    }
    return params;
}

std::vector<nn::ParamTensor*> CnnSegmenterParams::params() {
    std::vector<nn::ParamTensor*> out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        out.push_back(&weights[i]);
        out.push_back(&biases[i]);
    }
    return out;
}

nn::Var cnn_segmenter_forward(const nn::Var& image, CnnSegmenterParams& params) {
    nn::Var x = image;
    const std::size_t last = params.weights.size() - 1;
    for (std::size_t layer = 0; layer < params.weights.size(); ++layer) {
        x = nn::conv2d(x, nn::leaf(params.weights[layer]), nn::leaf(params.biases[layer]), 1, 1);
        if (layer != last) x = nn::relu(x);
    }
    return nn::softmax_channels(x);
}

SuperpixelProbMap segment(const ImageSample& image, const SegmenterConfig& config,
                          CnnSegmenterParams* params) {
    config.validate();
    SuperpixelProbMap map;
    map.n_superpixels = config.n_superpixels;
    const int h = image.height(), w = image.width();
    if (config.backend == SegmenterBackend::Slic) {
        const std::vector<std::int32_t> labels = slic_segment_labels(image, config);
        map.probs = Tensor::zeros({config.n_superpixels, h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                map.probs.at(labels[static_cast<std::size_t>(y) * w + x], y, x) = 1.0;
        return map;
    }
    if (params == nullptr)
        raise(Errc::BackendParamsMissing, "cnn segmenter backend requires trained parameters");
    if (params->channels.empty() || params->channels.back() != config.n_superpixels)
        raise(Errc::ParamShapeMismatch, "segmenter output channels do not match n_superpixels");
    nn::NoGradGuard guard;
    nn::Var out = cnn_segmenter_forward(nn::constant(image.pixels), *params);
    map.probs = std::move(out->value);
    return map;
}

std::vector<std::int32_t> to_label_map(const SuperpixelProbMap& map) {
    const int n = map.n_superpixels, h = map.height(), w = map.width();
    std::vector<std::int32_t> labels(static_cast<std::size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int arg = 0;
            double best = map.probs.at(0, y, x);
            for (int k = 1; k < n; ++k) {
                const double v = map.probs.at(k, y, x);
                if (v > best) {
                    best = v;
                    arg = k;
                }
            }
            labels[static_cast<std::size_t>(y) * w + x] = arg;
        }
    }
    return labels;
}

void write_probmap_blob(const std::string& path, const SuperpixelProbMap& map) {
    std::ofstream os(path, std::ios::binary);
    if (!os) raise(Errc::IoError, "cannot open for writing: " + path);
    os.write(kBlobMagic, sizeof(kBlobMagic));
    put_u32(os, static_cast<std::uint32_t>(map.height()));
    put_u32(os, static_cast<std::uint32_t>(map.width()));
    put_u32(os, static_cast<std::uint32_t>(map.n_superpixels));
    for (int y = 0; y < map.height(); ++y)
        for (int x = 0; x < map.width(); ++x)
            for (int k = 0; k < map.n_superpixels; ++k) put_f32(os, map.probs.at(k, y, x));
    if (!os) raise(Errc::IoError, "failed writing: " + path);
}

SuperpixelProbMap read_probmap_blob(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) raise(Errc::IoError, "cannot open: " + path);
    char magic[sizeof(kBlobMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kBlobMagic, sizeof(magic)) != 0)
        raise(Errc::IoError, "not a superpixel map blob: " + path);
    const std::uint32_t h = get_u32(is), w = get_u32(is), n = get_u32(is);
    if (!is || h == 0 || w == 0 || n == 0 || h > (1u << 16) || w > (1u << 16) || n > (1u << 20))
        raise(Errc::IoError, "corrupt superpixel map header: " + path);
    SuperpixelProbMap map;
    map.n_superpixels = static_cast<int>(n);
    map.probs = Tensor::zeros({static_cast<int>(n), static_cast<int>(h), static_cast<int>(w)});
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x)
            for (std::uint32_t k = 0; k < n; ++k)
                map.probs.at(static_cast<int>(k), static_cast<int>(y), static_cast<int>(x)) =
                    get_f32(is);
    if (!is) raise(Errc::IoError, "truncated superpixel map blob: " + path);
    return map;
}

void palette_color(int label, unsigned char& r, unsigned char& g, unsigned char& b) {
    const int i = ((label % 256) + 256) % 256;
    const double hue = std::fmod(i * 0.61803398875, 1.0);
    const double sat = 0.55 + 0.15 * (i % 3);
    const double val = 0.95 - 0.12 * ((i / 3) % 4);
    double rd, gd, bd;
    hsv_to_rgb(hue, sat, val, rd, gd, bd);
    r = static_cast<unsigned char>(std::lround(rd * 255.0));
    g = static_cast<unsigned char>(std::lround(gd * 255.0));
    b = static_cast<unsigned char>(std::lround(bd * 255.0));
}

void write_label_png(const std::string& path, const std::vector<std::int32_t>& labels, int h,
                     int w) {
    if (labels.size() != static_cast<std::size_t>(h) * w)
        raise(Errc::DimMismatch, "label map size does not match image dimensions");
    Tensor rgb = Tensor::zeros({3, h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            unsigned char r, g, b;
            palette_color(labels[static_cast<std::size_t>(y) * w + x], r, g, b);
            rgb.at(0, y, x) = r / 255.0;
            rgb.at(1, y, x) = g / 255.0;
            rgb.at(2, y, x) = b / 255.0;
        }
    }
    write_image_png(path, rgb);
}

}  // namespace dsn
