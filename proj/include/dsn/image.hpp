#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dsn/tensor.hpp"

namespace dsn {

// A decoded image plus its ground-truth score. Pixels are RGB in [0,1],
// stored {3,H,W}.
struct ImageSample {
    Tensor pixels;
    double score = 0.0;
    std::optional<std::string> distortion_type;
    std::optional<std::string> reference_id;
    std::string source_path;

    int height() const { return pixels.ndim() == 3 ? pixels.dim(1) : 0; }
    int width() const { return pixels.ndim() == 3 ? pixels.dim(2) : 0; }
};

struct ManifestEntry {
    std::string image_path;
    double score = 0.0;
    std::optional<std::string> distortion_type;
    std::optional<std::string> reference_id;
};

struct DatasetManifest {
    std::string name;
    std::string base_dir;  // manifest-relative paths resolve against this
    std::pair<double, double> score_scale{0.0, 0.0};
    std::vector<ManifestEntry> entries;

    double score_range() const { return score_scale.second - score_scale.first; }
};

// Records which image files were opened; protocols use it to audit that
// training never touched test images.
class AccessLog {
public:
    void record(const std::string& path) {
        std::lock_guard<std::mutex> lk(mu_);
        paths_.push_back(path);
    }
    std::vector<std::string> paths() const {
        std::lock_guard<std::mutex> lk(mu_);
        return paths_;
    }

private:
    mutable std::mutex mu_;
    std::vector<std::string> paths_;
};

// CSV with header image_path,score,distortion_type,reference_id (the two
// optional columns may be absent or empty). score_scale defaults to the
// observed min/max and can be overridden afterwards.
DatasetManifest load_manifest(const std::string& path);

std::string resolve_entry_path(const DatasetManifest& manifest, const ManifestEntry& entry);

// Decodes PNG/JPEG/BMP to RGB [0,1]; grayscale replicates to 3 channels.
ImageSample decode_image(const std::string& path);

ImageSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry,
                        AccessLog* log = nullptr);
std::vector<ImageSample> load_samples(const DatasetManifest& manifest, AccessLog* log = nullptr);

// Deterministic crop: identical (sample,size,seed) -> identical window.
ImageSample random_crop(const ImageSample& sample, int crop_h, int crop_w, std::uint64_t seed);

void write_image_png(const std::string& path, const Tensor& rgb_chw);

// Writes entries with absolute resolved paths, so the output is valid from
// any location.
void write_manifest_csv(const std::string& path, const DatasetManifest& manifest);

// Splits a CSV record honoring double-quote escaping.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace dsn
