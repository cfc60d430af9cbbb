#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsn/backbone.hpp"
#include "dsn/image.hpp"
#include "dsn/nn.hpp"
#include "dsn/predictor.hpp"
#include "dsn/spmapnet.hpp"
#include "dsn/superpixel.hpp"

namespace dsn {

enum class AblationVariant { BaselineFixed, BaselineArbitrary, MultiOnly, Full };

std::string variant_name(AblationVariant v);
AblationVariant parse_ablation_variant(const std::string& name);

struct PipelineConfig {
    AblationVariant variant = AblationVariant::Full;
    BackboneConfig backbone;
    SegmenterConfig segmenter;
    SpmapnetConfig spmapnet;
    PredictorConfig predictor;

    bool uses_local_heads() const {
        return variant == AblationVariant::MultiOnly || variant == AblationVariant::Full;
    }
    bool uses_superpixels() const { return variant == AblationVariant::Full; }
    bool uses_cnn_segmenter() const {
        return uses_superpixels() && segmenter.backend == SegmenterBackend::Cnn;
    }
    int fused_dim() const;
    void validate() const;
};

constexpr int kCheckpointFormatVersion = 1;

struct ModelBundle {
    int format_version = kCheckpointFormatVersion;
    std::uint64_t seed = 0;
    PipelineConfig config;
    BackboneParams backbone;
    SpmapnetParams spmapnet;
    CnnSegmenterParams segmenter;
    PredictorParams predictor;

    std::vector<nn::ParamTensor*> all_params();
    std::vector<nn::ParamTensor*> trainable_params();
    std::int64_t parameter_count();
};

// Deterministic: each component draws from its own seed substream, so e.g.
// the predictor weights do not depend on whether a segmenter exists.
ModelBundle init_bundle(const PipelineConfig& config, std::uint64_t seed);

// Scalar-output graph over one image; grads flow into every trainable
// component (including the cnn segmenter when active).
nn::Var build_forward(ModelBundle& bundle, const ImageSample& image);

// Inference scoring; applies the fixed-input policy of baseline-fixed
// (center crop to 224x224) before the graph is built.
double score_image(ModelBundle& bundle, const ImageSample& image);

ImageSample center_crop(const ImageSample& image, int h, int w);

void save_checkpoint(ModelBundle& bundle, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);

// Fills the named arrays of `params` from a checkpoint-format file,
// ignoring its config block (external weight files for the pretrained
// backbone use this).
void load_arrays_into(const std::string& path, const std::vector<nn::ParamTensor*>& params);

}  // namespace dsn
