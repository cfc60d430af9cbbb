#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dsn/image.hpp"
#include "dsn/nn.hpp"
#include "dsn/rng.hpp"
#include "dsn/tensor.hpp"

namespace dsn {

enum class BackboneVariant { Tiny, Resnet50Pretrained };

std::string variant_name(BackboneVariant v);
BackboneVariant parse_variant(const std::string& name);

struct BackboneConfig {
    BackboneVariant variant = BackboneVariant::Tiny;
    std::vector<int> tap_stages = {1, 2, 3};  // trunk stages feeding L1..L3
    std::array<int, 3> local_dims = {112, 112, 112};
    int holistic_dim = 224;
    int pool_h = 7, pool_w = 7;
    int head_channels = 32;   // width after each tap's 1x1 convolution
    bool freeze_trunk = false;
    std::string pretrained_weights;  // checkpoint-format file, resnet50 only

    int n_stages() const { return 4; }
    int min_input() const { return 32; }
    void validate() const;
};

struct MultiScaleFeatures {
    std::array<Tensor, 3> locals;  // L1..L3
    Tensor holistic;               // F
};

// 1x1 convolution -> adaptive average pooling -> fully connected projection.
struct HeadParams {
    nn::ParamTensor conv_w, conv_b;
    nn::ParamTensor fc_w, fc_b;
};

// Convolution + frozen-statistics batch norm (affine part trainable).
struct ConvBn {
    nn::ParamTensor conv_w;
    nn::ParamTensor gamma, beta;
    nn::ParamTensor mean, var;  // running statistics, never trainable
    int stride = 1, pad = 0, kernel = 1;
};

struct Bottleneck {
    ConvBn c1, c2, c3;
    std::optional<ConvBn> down;
};

struct BackboneParams {
    BackboneVariant variant = BackboneVariant::Tiny;
    // tiny trunk: four stride-2 3x3 convolutions
    std::vector<nn::ParamTensor> tiny_w, tiny_b;
    // resnet50 trunk
    ConvBn stem;
    std::vector<std::vector<Bottleneck>> layers;
    // heads: locals empty when only the holistic path is instantiated
    std::vector<HeadParams> local_heads;
    HeadParams holistic_head;

    std::vector<nn::ParamTensor*> all_params();
    std::int64_t parameter_count();
};

// with_local_heads=false instantiates only the holistic head (used by the
// baseline variants).
BackboneParams init_backbone(const BackboneConfig& config, bool with_local_heads, Rng& rng);

// Trainable-parameter channel widths of the trunk stage outputs.
std::vector<int> trunk_stage_channels(BackboneVariant variant);

struct BackboneGraph {
    std::vector<nn::Var> locals;  // empty when local heads absent
    nn::Var holistic;
};

// Graph-building forward over the raw [0,1] RGB image {3,H,W}; applies the
// fixed channel standardization internally.
BackboneGraph backbone_forward(const nn::Var& image, BackboneParams& params,
                               const BackboneConfig& config);

// V_ms = [L1, L2, L3, F]. Requires local heads to be present.
MultiScaleFeatures extract(const ImageSample& image, const BackboneConfig& config,
                           BackboneParams& params);

// Names/shapes follow the checkpoint array naming; use to prepare an
// external weight file for the pretrained variant.
void check_image_size(const ImageSample& image, const BackboneConfig& config);

}  // namespace dsn
