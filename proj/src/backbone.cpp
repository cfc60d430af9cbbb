#include "dsn/backbone.hpp"

#include <cmath>

#include "dsn/common.hpp"

namespace dsn {

namespace {

constexpr double kStdMean[3] = {0.485, 0.456, 0.406};
constexpr double kStdStd[3] = {0.229, 0.224, 0.225};

constexpr int kTinyChannels[4] = {16, 32, 64, 128};
constexpr int kResnetBlocks[4] = {3, 4, 6, 3};
constexpr int kResnetMid[4] = {64, 128, 256, 512};
constexpr int kExpansion = 4;

nn::ParamTensor make_conv(const std::string& name, int out_ch, int in_ch, int k, Rng& rng,
                          bool trainable, double gain = 2.0) {
    nn::ParamTensor p;
    p.name = name;
    p.value = Tensor({out_ch, in_ch, k, k});
    nn::init_kaiming(p, in_ch * k * k, rng, gain);
    p.grad = Tensor::zeros(p.value.shape());
    p.trainable = trainable;
    return p;
}

nn::ParamTensor make_filled(const std::string& name, const std::vector<int>& shape, double v,
                            bool trainable) {
    nn::ParamTensor p;
    p.name = name;
    p.value = Tensor::full(shape, v);
    p.grad = Tensor::zeros(shape);
    p.trainable = trainable;
    return p;
}

ConvBn make_conv_bn(const std::string& prefix, int out_ch, int in_ch, int k, int stride, int pad,
                    Rng& rng, bool trainable) {
    ConvBn cb;
    cb.conv_w = make_conv(prefix + ".conv.weight", out_ch, in_ch, k, rng, trainable);
    cb.gamma = make_filled(prefix + ".bn.gamma", {out_ch}, 1.0, trainable);
    cb.beta = make_filled(prefix + ".bn.beta", {out_ch}, 0.0, trainable);
    cb.mean = make_filled(prefix + ".bn.mean", {out_ch}, 0.0, false);
    cb.var = make_filled(prefix + ".bn.var", {out_ch}, 1.0, false);
    cb.kernel = k;
    cb.stride = stride;
    cb.pad = pad;
    return cb;
}

HeadParams make_head(const std::string& prefix, int in_ch, int head_ch, int pooled, int out_dim,
                     Rng& rng) {
    HeadParams h;
    h.conv_w = make_conv(prefix + ".conv.weight", head_ch, in_ch, 1, rng, true);
    h.conv_b = make_filled(prefix + ".conv.bias", {head_ch}, 0.0, true);
    h.fc_w.name = prefix + ".fc.weight";
    h.fc_w.value = Tensor({out_dim, head_ch * pooled});
    nn::init_kaiming(h.fc_w, head_ch * pooled, rng, 1.0);
    h.fc_w.grad = Tensor::zeros(h.fc_w.value.shape());
    h.fc_b = make_filled(prefix + ".fc.bias", {out_dim}, 0.0, true);
    return h;
}

nn::Var conv_bn_forward(const nn::Var& x, ConvBn& cb) {
    nn::Var bias = nn::constant(Tensor::zeros({cb.conv_w.value.dim(0)}));
    nn::Var y = nn::conv2d(x, nn::leaf(cb.conv_w), bias, cb.stride, cb.pad);
    return nn::batchnorm_affine(y, nn::leaf(cb.gamma), nn::leaf(cb.beta), cb.mean.value,
                                cb.var.value);
}

nn::Var standardize(const nn::Var& image) {
    Tensor mean({3}), var({3});
    Tensor ones = Tensor::full({3}, 1.0), zeros = Tensor::zeros({3});
    for (int c = 0; c < 3; ++c) {
        mean.vec()[c] = kStdMean[c];
        var.vec()[c] = kStdStd[c] * kStdStd[c];
    }
    return nn::batchnorm_affine(image, nn::constant(ones), nn::constant(zeros), mean, var, 0.0);
}

void collect(ConvBn& cb, std::vector<nn::ParamTensor*>& out) {
    out.push_back(&cb.conv_w);
    out.push_back(&cb.gamma);
    out.push_back(&cb.beta);
    out.push_back(&cb.mean);
    out.push_back(&cb.var);
}

void collect(HeadParams& h, std::vector<nn::ParamTensor*>& out) {
    out.push_back(&h.conv_w);
    out.push_back(&h.conv_b);
    out.push_back(&h.fc_w);
    out.push_back(&h.fc_b);
}

nn::Var head_forward(const nn::Var& tap, HeadParams& head, const BackboneConfig& config) {
    nn::Var y = nn::conv2d(tap, nn::leaf(head.conv_w), nn::leaf(head.conv_b), 1, 0);
    y = nn::adaptive_pool2d(y, config.pool_h, config.pool_w, nn::PoolMode::Average);
    y = nn::flatten(y);
    return nn::linear(y, nn::leaf(head.fc_w), nn::leaf(head.fc_b));
}

// Stage outputs of the trunk, index 0 = stage 1.
std::vector<nn::Var> trunk_forward(const nn::Var& x, BackboneParams& params) {
    std::vector<nn::Var> stages;
    if (params.variant == BackboneVariant::Tiny) {
        nn::Var y = x;
        for (std::size_t i = 0; i < params.tiny_w.size(); ++i) {
            y = nn::conv2d(y, nn::leaf(params.tiny_w[i]), nn::leaf(params.tiny_b[i]), 2, 1);
            y = nn::relu(y);
            stages.push_back(y);
        }
        return stages;
    }
    nn::Var y = nn::relu(conv_bn_forward(x, params.stem));
    y = nn::max_pool2d(y, 3, 2, 1);
    for (auto& layer : params.layers) {
        for (auto& block : layer) {
            nn::Var identity = block.down ? conv_bn_forward(y, *block.down) : y;
            nn::Var z = nn::relu(conv_bn_forward(y, block.c1));
            z = nn::relu(conv_bn_forward(z, block.c2));
            z = conv_bn_forward(z, block.c3);
            y = nn::relu(nn::add(z, identity));
        }
        stages.push_back(y);
    }
    return stages;
}

}  // namespace

std::string variant_name(BackboneVariant v) {
    return v == BackboneVariant::Tiny ? "tiny" : "resnet50-pretrained";
}

BackboneVariant parse_variant(const std::string& name) {
    if (name == "tiny") return BackboneVariant::Tiny;
    if (name == "resnet50-pretrained") return BackboneVariant::Resnet50Pretrained;
    raise(Errc::InvalidConfig, "unknown backbone variant: " + name);
}

void BackboneConfig::validate() const {
    if (tap_stages.size() != 3) raise(Errc::InvalidConfig, "tap_stages must list three stages");
    for (std::size_t i = 0; i < tap_stages.size(); ++i) {
        if (tap_stages[i] < 1 || tap_stages[i] > n_stages())
            raise(Errc::InvalidConfig, "tap stage out of range");
        if (i > 0 && tap_stages[i] <= tap_stages[i - 1])
            raise(Errc::InvalidConfig, "tap_stages must be strictly increasing");
    }
    for (int d : local_dims)
        if (d < 1) raise(Errc::InvalidConfig, "local_dims must be positive");
    if (holistic_dim < 1) raise(Errc::InvalidConfig, "holistic_dim must be positive");
    if (pool_h < 1 || pool_w < 1) raise(Errc::InvalidConfig, "pool size must be positive");
    if (head_channels < 1) raise(Errc::InvalidConfig, "head_channels must be positive");
}

std::vector<int> trunk_stage_channels(BackboneVariant variant) {
    if (variant == BackboneVariant::Tiny)
        return {kTinyChannels[0], kTinyChannels[1], kTinyChannels[2], kTinyChannels[3]};
    return {kResnetMid[0] * kExpansion, kResnetMid[1] * kExpansion, kResnetMid[2] * kExpansion,
            kResnetMid[3] * kExpansion};
}

BackboneParams init_backbone(const BackboneConfig& config, bool with_local_heads, Rng& rng) {
    config.validate();
    BackboneParams params;
    params.variant = config.variant;
    const bool trunk_trainable = !config.freeze_trunk;

    if (config.variant == BackboneVariant::Tiny) {
        int in_ch = 3;
        for (int i = 0; i < 4; ++i) {
            params.tiny_w.push_back(make_conv("trunk.conv" + std::to_string(i + 1) + ".weight",
                                              kTinyChannels[i], in_ch, 3, rng, trunk_trainable));
            params.tiny_b.push_back(make_filled("trunk.conv" + std::to_string(i + 1) + ".bias",
                                                {kTinyChannels[i]}, 0.0, trunk_trainable));
            in_ch = kTinyChannels[i];
        }
    } else {
        params.stem = make_conv_bn("trunk.stem", 64, 3, 7, 2, 3, rng, trunk_trainable);
        int in_ch = 64;
        for (int l = 0; l < 4; ++l) {
            std::vector<Bottleneck> layer;
            const int mid = kResnetMid[l];
            const int out_ch = mid * kExpansion;
            for (int b = 0; b < kResnetBlocks[l]; ++b) {
                const std::string prefix =
                    "trunk.layer" + std::to_string(l + 1) + ".block" + std::to_string(b + 1);
                const int stride = (b == 0 && l > 0) ? 2 : 1;
                Bottleneck block;
                block.c1 = make_conv_bn(prefix + ".c1", mid, in_ch, 1, 1, 0, rng, trunk_trainable);
                block.c2 =
                    make_conv_bn(prefix + ".c2", mid, mid, 3, stride, 1, rng, trunk_trainable);
                block.c3 = make_conv_bn(prefix + ".c3", out_ch, mid, 1, 1, 0, rng, trunk_trainable);
                if (b == 0)
                    block.down = make_conv_bn(prefix + ".down", out_ch, in_ch, 1, stride, 0, rng,
                                              trunk_trainable);
                layer.push_back(std::move(block));
                in_ch = out_ch;
            }
            params.layers.push_back(std::move(layer));
        }
    }

    const std::vector<int> stage_ch = trunk_stage_channels(config.variant);
    const int pooled = config.pool_h * config.pool_w;
    if (with_local_heads) {
        for (int i = 0; i < 3; ++i) {
            const int tap_ch = stage_ch[static_cast<std::size_t>(config.tap_stages[i] - 1)];
            params.local_heads.push_back(make_head("head.local" + std::to_string(i + 1), tap_ch,
                                                   config.head_channels, pooled,
                                                   config.local_dims[i], rng));
        }
    }
    params.holistic_head = make_head("head.holistic", stage_ch.back(), config.head_channels,
                                     pooled, config.holistic_dim, rng);
    return params;
}

std::vector<nn::ParamTensor*> BackboneParams::all_params() {
    std::vector<nn::ParamTensor*> out;
    for (std::size_t i = 0; i < tiny_w.size(); ++i) {
        out.push_back(&tiny_w[i]);
        out.push_back(&tiny_b[i]);
    }
    if (variant == BackboneVariant::Resnet50Pretrained) {
        collect(stem, out);
        for (auto& layer : layers) {
            for (auto& block : layer) {
                collect(block.c1, out);
                collect(block.c2, out);
                collect(block.c3, out);
                if (block.down) collect(*block.down, out);
            }
        }
    }
    for (auto& h : local_heads) collect(h, out);
    collect(holistic_head, out);
    return out;
}

std::int64_t BackboneParams::parameter_count() {
    std::int64_t n = 0;
    for (nn::ParamTensor* p : all_params())
        if (p->trainable) n += p->value.numel();
    return n;
}

void check_image_size(const ImageSample& image, const BackboneConfig& config) {
    if (image.height() < config.min_input() || image.width() < config.min_input())
        raise(Errc::ImageTooSmall,
              "image " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                  " is below the minimum side of " + std::to_string(config.min_input()));
}

BackboneGraph backbone_forward(const nn::Var& image, BackboneParams& params,
                               const BackboneConfig& config) {
    config.validate();
    if (params.variant != config.variant)
        raise(Errc::ParamShapeMismatch, "parameters built for a different backbone variant");
    const std::vector<int> stage_ch = trunk_stage_channels(config.variant);
    const int pooled_in = config.head_channels * config.pool_h * config.pool_w;
    if (params.holistic_head.fc_w.value.dim(0) != config.holistic_dim ||
        params.holistic_head.fc_w.value.dim(1) != pooled_in ||
        params.holistic_head.conv_w.value.dim(0) != config.head_channels)
        raise(Errc::ParamShapeMismatch, "holistic head does not match the configuration");
    if (!params.local_heads.empty()) {
        if (params.local_heads.size() != 3)
            raise(Errc::ParamShapeMismatch, "expected three local heads");
        for (int i = 0; i < 3; ++i) {
            const auto& h = params.local_heads[static_cast<std::size_t>(i)];
            const int tap_ch = stage_ch[static_cast<std::size_t>(config.tap_stages[i] - 1)];
            if (h.fc_w.value.dim(0) != config.local_dims[i] ||
                h.fc_w.value.dim(1) != pooled_in || h.conv_w.value.dim(1) != tap_ch)
                raise(Errc::ParamShapeMismatch, "local head does not match the configuration");
        }
    }

    std::vector<nn::Var> stages = trunk_forward(standardize(image), params);
    auto require_pool_fits = [&](const nn::Var& tap, int stage) {
        if (tap->value.dim(1) < config.pool_h || tap->value.dim(2) < config.pool_w)
            raise(Errc::ImageTooSmall, "stage " + std::to_string(stage) + " output " +
                                           std::to_string(tap->value.dim(2)) + "x" +
                                           std::to_string(tap->value.dim(1)) +
                                           " is smaller than the pooling target");
    };

    BackboneGraph graph;
    for (std::size_t i = 0; i < params.local_heads.size(); ++i) {
        const int stage = config.tap_stages[i];
        nn::Var tap = stages[static_cast<std::size_t>(stage - 1)];
        require_pool_fits(tap, stage);
        graph.locals.push_back(head_forward(tap, params.local_heads[i], config));
    }
    require_pool_fits(stages.back(), config.n_stages());
    graph.holistic = head_forward(stages.back(), params.holistic_head, config);
    return graph;
}

MultiScaleFeatures extract(const ImageSample& image, const BackboneConfig& config,
                           BackboneParams& params) {
    check_image_size(image, config);
    if (params.local_heads.empty())
        raise(Errc::ParamShapeMismatch, "parameters lack the local heads required for V_ms");
    nn::NoGradGuard guard;
    BackboneGraph graph = backbone_forward(nn::constant(image.pixels), params, config);
    MultiScaleFeatures out;
    for (int i = 0; i < 3; ++i) out.locals[i] = std::move(graph.locals[static_cast<std::size_t>(i)]->value);
    out.holistic = std::move(graph.holistic->value);
    return out;
}

}  // namespace dsn
