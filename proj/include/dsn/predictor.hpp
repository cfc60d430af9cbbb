#pragma once

#include <cstdint>
#include <vector>

#include "dsn/backbone.hpp"
#include "dsn/nn.hpp"
#include "dsn/rng.hpp"
#include "dsn/spmapnet.hpp"
#include "dsn/tensor.hpp"

namespace dsn {

struct PredictorConfig {
    int hidden = 128;

    void validate() const;
};

// fused_dim -> hidden -> 1, rectified between; raw score units, no squashing.
struct PredictorParams {
    nn::ParamTensor fc1_w, fc1_b, fc2_w, fc2_b;

    std::vector<nn::ParamTensor*> all_params();
    std::int64_t parameter_count();
    int input_dim() const { return fc1_w.value.dim(1); }
};

PredictorParams init_predictor(int fused_dim, const PredictorConfig& config, Rng& rng);

// [L1*A1, L2*A2, L3*A3, F*A_F]; empty scales contribute nothing.
Tensor fuse(const MultiScaleFeatures& features, const AdjacencyMap& adjacency);

// Graph-building fusion of aligned feature/weight pairs.
nn::Var fuse_vars(const std::vector<nn::Var>& features, const std::vector<nn::Var>& weights);

nn::Var predictor_forward(const nn::Var& fused, PredictorParams& params);

double predict(const Tensor& fused, PredictorParams& params);
std::vector<double> predict_batch(const std::vector<Tensor>& fused, PredictorParams& params);

}  // namespace dsn
