#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dsn/rng.hpp"
#include "dsn/tensor.hpp"

namespace dsn::nn {

// Named trainable parameter. `grad` accumulates across backward passes
// until zero_grads; Adam state lives in the optimizer, keyed by name.
struct ParamTensor {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    ParamTensor() = default;
    ParamTensor(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}
};

struct Node;
using Var = std::shared_ptr<Node>;

// One node of the reverse-mode tape. Forward-only passes (NoGradGuard,
// or subtrees with no trainable leaf) carry no parents, so intermediate
// activations free as soon as the chain moves on.
struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;
    ParamTensor* param = nullptr;
    bool requires_grad = false;
};

bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

Var constant(Tensor v);
Var leaf(ParamTensor& p);

enum class PoolMode { Average, Max };

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var linear(const Var& x, const Var& w, const Var& b);
Var relu(const Var& x);
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double k);
Var concat(const std::vector<Var>& parts);
Var flatten(const Var& x);
Var adaptive_pool2d(const Var& x, int out_h, int out_w, PoolMode mode);
Var max_pool2d(const Var& x, int kernel, int stride, int pad);
Var softmax_channels(const Var& x);
Var batchnorm_affine(const Var& x, const Var& gamma, const Var& beta,
                     const Tensor& running_mean, const Tensor& running_var, double eps = 1e-5);
Var abs_diff(const Var& pred, double target);
Var total_variation(const Var& x);
// Extracts one element as a scalar node (grad routes back to that slot).
Var pick(const Var& x, std::int64_t index);

// Seeds root.grad with `seed_grad` and propagates; param grads accumulate.
void backward(const Var& root, double seed_grad = 1.0);

void zero_grads(const std::vector<ParamTensor*>& params);

// He-normal fan-in initialization; `gain` 2.0 for relu-fed layers, 1.0
// for the final linear head.
void init_kaiming(ParamTensor& weight, int fan_in, Rng& rng, double gain = 2.0);

// Plain-tensor adaptive pooling. Throws TargetLargerThanInput when
// out_h/out_w exceed the input grid (upsampling is out of contract).
Tensor adaptive_pool(const Tensor& chw, int out_h, int out_w, PoolMode mode);

}  // namespace dsn::nn
