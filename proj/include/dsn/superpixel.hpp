#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsn/image.hpp"
#include "dsn/nn.hpp"
#include "dsn/tensor.hpp"

namespace dsn {

// Per-pixel membership distribution over N superpixel channels. Stored
// {N,H,W}; every pixel's channel column sums to 1.
struct SuperpixelProbMap {
    Tensor probs;
    int n_superpixels = 0;

    int height() const { return probs.dim(1); }
    int width() const { return probs.dim(2); }
};

enum class SegmenterBackend { Slic, Cnn };

struct SegmenterConfig {
    SegmenterBackend backend = SegmenterBackend::Slic;
    int n_superpixels = 100;
    double slic_compactness = 10.0;
    int slic_iterations = 10;
    // Hidden widths of the first four convolution layers; the fifth always
    // emits n_superpixels channels. Empty selects {32,64,64,32}.
    std::vector<int> cnn_channels;
    double tv_weight = 0.0;  // optional smoothness regularizer on the soft map

    std::vector<int> resolved_cnn_channels() const;
    void validate() const;
};

// Five-layer convolutional segmenter (3x3, stride 1) ending in a per-pixel
// softmax over N channels.
struct CnnSegmenterParams {
    std::vector<nn::ParamTensor> weights;  // conv kernels
    std::vector<nn::ParamTensor> biases;
    std::vector<int> channels;

    std::vector<nn::ParamTensor*> params();
};

CnnSegmenterParams init_cnn_segmenter(const SegmenterConfig& config, Rng& rng);

// Graph-building forward; image is the raw [0,1] RGB tensor {3,H,W}.
nn::Var cnn_segmenter_forward(const nn::Var& image, CnnSegmenterParams& params);

// P = S(x). slic yields a one-hot map, cnn a soft map. cnn backend
// requires params (BackendParamsMissing otherwise).
SuperpixelProbMap segment(const ImageSample& image, const SegmenterConfig& config,
                          CnnSegmenterParams* params = nullptr);

// argmax over channels, ties toward the lowest index.
std::vector<std::int32_t> to_label_map(const SuperpixelProbMap& map);

// SLIC internals exposed for the clustering oracle in tests.
struct SlicSeedGrid {
    int nx = 0, ny = 0;
    std::vector<double> x, y;  // seed centers, one per label
};
SlicSeedGrid slic_seed_grid(int width, int height, int n_superpixels);
void rgb_to_lab(double r, double g, double b, double& l_out, double& a_out, double& b_out);
// Joint (lab, position) feature of one pixel with the compactness weight
// applied to the spatial part.
std::vector<std::int32_t> slic_segment_labels(const ImageSample& image, const SegmenterConfig& config);

// Raw binary blob: "SPXL1" magic, H,W,N as u32 LE, then row-major HxWxN
// float32 LE.
void write_probmap_blob(const std::string& path, const SuperpixelProbMap& map);
SuperpixelProbMap read_probmap_blob(const std::string& path);

// Fixed 256-color palette for label visualization.
void palette_color(int label, unsigned char& r, unsigned char& g, unsigned char& b);
void write_label_png(const std::string& path, const std::vector<std::int32_t>& labels, int h, int w);

}  // namespace dsn
