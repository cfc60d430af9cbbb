#include "dsn/predictor.hpp"

#include "dsn/common.hpp"

namespace dsn {

void PredictorConfig::validate() const {
    if (hidden < 1) raise(Errc::InvalidConfig, "hidden width must be positive");
}

PredictorParams init_predictor(int fused_dim, const PredictorConfig& config, Rng& rng) {
    config.validate();
    if (fused_dim < 1) raise(Errc::InvalidConfig, "fused dimension must be positive");
    PredictorParams params;
    params.fc1_w.name = "pred.fc1.weight";
    params.fc1_w.value = Tensor({config.hidden, fused_dim});
    nn::init_kaiming(params.fc1_w, fused_dim, rng);
    params.fc1_w.grad = Tensor::zeros(params.fc1_w.value.shape());
    params.fc1_b.name = "pred.fc1.bias";
    params.fc1_b.value = Tensor::zeros({config.hidden});
    params.fc1_b.grad = Tensor::zeros({config.hidden});
    params.fc2_w.name = "pred.fc2.weight";
    params.fc2_w.value = Tensor({1, config.hidden});
    nn::init_kaiming(params.fc2_w, config.hidden, rng, 1.0);
    params.fc2_w.grad = Tensor::zeros(params.fc2_w.value.shape());
    params.fc2_b.name = "pred.fc2.bias";
    params.fc2_b.value = Tensor::zeros({1});
    params.fc2_b.grad = Tensor::zeros({1});
    return params;
}

std::vector<nn::ParamTensor*> PredictorParams::all_params() {
    return {&fc1_w, &fc1_b, &fc2_w, &fc2_b};
}

std::int64_t PredictorParams::parameter_count() {
    std::int64_t n = 0;
    for (nn::ParamTensor* p : all_params())
        if (p->trainable) n += p->value.numel();
    return n;
}

Tensor fuse(const MultiScaleFeatures& features, const AdjacencyMap& adjacency) {
    std::vector<double> out;
    auto append_product = [&out](const Tensor& f, const Tensor& a) {
        if (f.numel() != a.numel())
            raise(Errc::DimMismatch, "feature and adjacency dimensions disagree");
        for (std::int64_t i = 0; i < f.numel(); ++i) out.push_back(f.vec()[static_cast<std::size_t>(i)] * a.vec()[static_cast<std::size_t>(i)]);
    };
    for (int i = 0; i < 3; ++i)
        append_product(features.locals[static_cast<std::size_t>(i)],
                       adjacency.local_weights[static_cast<std::size_t>(i)]);
    append_product(features.holistic, adjacency.holistic_weights);
    return Tensor::vector(out);
}

nn::Var fuse_vars(const std::vector<nn::Var>& features, const std::vector<nn::Var>& weights) {
    if (features.size() != weights.size())
        raise(Errc::DimMismatch, "feature and adjacency counts disagree");
    std::vector<nn::Var> parts;
    parts.reserve(features.size());
    for (std::size_t i = 0; i < features.size(); ++i)
        parts.push_back(nn::mul(features[i], weights[i]));
    return nn::concat(parts);
}

nn::Var predictor_forward(const nn::Var& fused, PredictorParams& params) {
    if (fused->value.numel() != params.fc1_w.value.dim(1))
        raise(Errc::DimMismatch, "fused vector does not match the head input width");
    nn::Var h = nn::relu(nn::linear(fused, nn::leaf(params.fc1_w), nn::leaf(params.fc1_b)));
    return nn::linear(h, nn::leaf(params.fc2_w), nn::leaf(params.fc2_b));
}

double predict(const Tensor& fused, PredictorParams& params) {
    nn::NoGradGuard guard;
    nn::Var out = predictor_forward(nn::constant(fused), params);
    return out->value.vec()[0];
}

std::vector<double> predict_batch(const std::vector<Tensor>& fused, PredictorParams& params) {
    std::vector<double> out;
    out.reserve(fused.size());
    for (const Tensor& f : fused) out.push_back(predict(f, params));
    return out;
}

}  // namespace dsn
