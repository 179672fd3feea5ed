#pragma once

// Building blocks shared by the model branches: forward-pass context,
// parameter initialisation, batch normalisation and dropout.

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "hyphgt/optim.hpp"
#include "hyphgt/tensor.hpp"

namespace hyphgt::nn {

using ad::Tensor;

struct ForwardContext {
    bool training = false;
    // Batch-norm running statistics are only written when this is set.
    bool update_running_stats = true;
    std::mt19937_64* rng = nullptr;  // required when training with dropout > 0
    std::vector<std::string>* warnings = nullptr;
};

// rows x cols leaf with entries uniform in [-bound, bound].
Tensor uniform(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double bound);

// Batch normalisation over the rows of an N x d matrix.
struct BatchNorm {
    Tensor scale;  // 1 x d, trainable
    Tensor shift;  // 1 x d, trainable
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.1;
    double var_floor = 1e-5;

    // Registers "<prefix>.scale", ".shift", ".running_mean", ".running_var".
    static BatchNorm create(ad::ParameterStore& store, const std::string& prefix, std::size_t width);

    // Training: batch statistics (biased variance, floored at var_floor) and a
    // momentum update of the running statistics with the unbiased variance.
    // Eval, or a training batch of one row: running statistics.
    Tensor operator()(const Tensor& x, ForwardContext& ctx) const;
};

// Inverted dropout; identity outside training or at rate 0.
Tensor dropout(const Tensor& x, double rate, ForwardContext& ctx);

}  // namespace hyphgt::nn
