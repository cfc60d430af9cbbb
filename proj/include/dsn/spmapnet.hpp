#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dsn/nn.hpp"
#include "dsn/rng.hpp"
#include "dsn/superpixel.hpp"
#include "dsn/tensor.hpp"

namespace dsn {

// Fixed-dimension reweighting vectors aligned with the multi-scale features.
struct AdjacencyMap {
    std::array<Tensor, 3> local_weights;  // A1..A3
    Tensor holistic_weights;              // A_F
};

struct SpmapnetConfig {
    std::vector<int> conv_channels = {64, 64, 64};  // 3x3 stack over the N-channel map
    int pool_h = 7, pool_w = 7;                     // adaptive max pooling target

    void validate() const;
};

// Shared convolutional trunk -> max pool -> flatten, then one projection per
// local scale plus one for the holistic branch.
struct SpmapnetParams {
    int n_superpixels = 0;
    std::vector<nn::ParamTensor> conv_w, conv_b;
    std::array<nn::ParamTensor, 3> local_w, local_b;
    nn::ParamTensor holistic_w, holistic_b;

    std::vector<nn::ParamTensor*> all_params();
    std::int64_t parameter_count();
};

SpmapnetParams init_spmapnet(const SpmapnetConfig& config, int n_superpixels,
                             const std::array<int, 3>& local_dims, int holistic_dim, Rng& rng);

struct AdjacencyGraph {
    std::array<nn::Var, 3> locals;
    nn::Var holistic;
};

// Graph-building forward over the probability map {N,H,W}.
AdjacencyGraph spmapnet_forward(const nn::Var& probmap, SpmapnetParams& params,
                                const SpmapnetConfig& config);

AdjacencyMap generate_adjacency(const SuperpixelProbMap& map, SpmapnetParams& params,
                                const SpmapnetConfig& config);

}  // namespace dsn
