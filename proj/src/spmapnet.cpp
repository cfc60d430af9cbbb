#include "dsn/spmapnet.hpp"

#include "dsn/common.hpp"

namespace dsn {

void SpmapnetConfig::validate() const {
    if (conv_channels.empty()) raise(Errc::InvalidConfig, "conv_channels must not be empty");
    for (int c : conv_channels)
        if (c < 1) raise(Errc::InvalidConfig, "conv_channels entries must be positive");
    if (pool_h < 1 || pool_w < 1) raise(Errc::InvalidConfig, "pool size must be positive");
}

SpmapnetParams init_spmapnet(const SpmapnetConfig& config, int n_superpixels,
                             const std::array<int, 3>& local_dims, int holistic_dim, Rng& rng) {
    config.validate();
    if (n_superpixels < 1) raise(Errc::InvalidConfig, "n_superpixels must be positive");
    SpmapnetParams params;
    params.n_superpixels = n_superpixels;
    int in_ch = n_superpixels;
    for (std::size_t i = 0; i < config.conv_channels.size(); ++i) {
        const int out_ch = config.conv_channels[i];
        nn::ParamTensor w;
        w.name = "spmap.conv" + std::to_string(i + 1) + ".weight";
        w.value = Tensor({out_ch, in_ch, 3, 3});
        nn::init_kaiming(w, in_ch * 9, rng);
        w.grad = Tensor::zeros(w.value.shape());
        params.conv_w.push_back(std::move(w));
        nn::ParamTensor b;
        b.name = "spmap.conv" + std::to_string(i + 1) + ".bias";
        b.value = Tensor::zeros({out_ch});
        b.grad = Tensor::zeros({out_ch});
        params.conv_b.push_back(std::move(b));
        in_ch = out_ch;
    }
    const int flat = in_ch * config.pool_h * config.pool_w;
    auto make_proj = [&](const std::string& name, int out_dim, nn::ParamTensor& w,
                         nn::ParamTensor& b) {
        w.name = "spmap." + name + ".weight";
        w.value = Tensor({out_dim, flat});
        nn::init_kaiming(w, flat, rng, 1.0);
        w.grad = Tensor::zeros(w.value.shape());
        b.name = "spmap." + name + ".bias";
        b.value = Tensor::zeros({out_dim});
        b.grad = Tensor::zeros({out_dim});
    };
    for (int i = 0; i < 3; ++i)
        make_proj("local" + std::to_string(i + 1), local_dims[static_cast<std::size_t>(i)],
                  params.local_w[static_cast<std::size_t>(i)],
                  params.local_b[static_cast<std::size_t>(i)]);
    make_proj("holistic", holistic_dim, params.holistic_w, params.holistic_b);
    return params;
}

std::vector<nn::ParamTensor*> SpmapnetParams::all_params() {
    std::vector<nn::ParamTensor*> out;
    for (std::size_t i = 0; i < conv_w.size(); ++i) {
        out.push_back(&conv_w[i]);
        out.push_back(&conv_b[i]);
    }
    for (int i = 0; i < 3; ++i) {
        out.push_back(&local_w[static_cast<std::size_t>(i)]);
        out.push_back(&local_b[static_cast<std::size_t>(i)]);
    }
    out.push_back(&holistic_w);
    out.push_back(&holistic_b);
    return out;
}

std::int64_t SpmapnetParams::parameter_count() {
    std::int64_t n = 0;
    for (nn::ParamTensor* p : all_params())
        if (p->trainable) n += p->value.numel();
    return n;
}

AdjacencyGraph spmapnet_forward(const nn::Var& probmap, SpmapnetParams& params,
                                const SpmapnetConfig& config) {
    config.validate();
    if (probmap->value.ndim() != 3) raise(Errc::DimMismatch, "probability map must be {N,H,W}");
    if (probmap->value.dim(0) != params.n_superpixels)
        raise(Errc::ParamShapeMismatch, "probability map channels do not match N");
    if (probmap->value.dim(1) < config.pool_h || probmap->value.dim(2) < config.pool_w)
        raise(Errc::DimMismatch, "probability map is smaller than the pooling target");
    nn::Var x = probmap;
    for (std::size_t i = 0; i < params.conv_w.size(); ++i) {
        x = nn::conv2d(x, nn::leaf(params.conv_w[i]), nn::leaf(params.conv_b[i]), 1, 1);
        x = nn::relu(x);
    }
    x = nn::adaptive_pool2d(x, config.pool_h, config.pool_w, nn::PoolMode::Max);
    x = nn::flatten(x);
    AdjacencyGraph graph;
    for (int i = 0; i < 3; ++i)
        graph.locals[static_cast<std::size_t>(i)] =
            nn::linear(x, nn::leaf(params.local_w[static_cast<std::size_t>(i)]),
                       nn::leaf(params.local_b[static_cast<std::size_t>(i)]));
    graph.holistic = nn::linear(x, nn::leaf(params.holistic_w), nn::leaf(params.holistic_b));
    return graph;
}

AdjacencyMap generate_adjacency(const SuperpixelProbMap& map, SpmapnetParams& params,
                                const SpmapnetConfig& config) {
    nn::NoGradGuard guard;
    AdjacencyGraph graph = spmapnet_forward(nn::constant(map.probs), params, config);
    AdjacencyMap out;
    for (int i = 0; i < 3; ++i)
        out.local_weights[static_cast<std::size_t>(i)] =
            std::move(graph.locals[static_cast<std::size_t>(i)]->value);
    out.holistic_weights = std::move(graph.holistic->value);
    return out;
}

}  // namespace dsn
