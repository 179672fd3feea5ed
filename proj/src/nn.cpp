#include "hyphgt/nn.hpp"

#include <cmath>

#include "hyphgt/errors.hpp"

namespace hyphgt::nn {

Tensor uniform(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = u(rng);
    return Tensor::from_data({rows, cols}, std::move(v));
}

BatchNorm BatchNorm::create(ad::ParameterStore& store, const std::string& prefix, std::size_t width) {
    BatchNorm bn;
    bn.scale = store.add(prefix + ".scale", Tensor::full({1, width}, 1.0));
    bn.shift = store.add(prefix + ".shift", Tensor::zeros({1, width}));
    bn.running_mean = store.add(prefix + ".running_mean", Tensor::zeros({1, width}), ad::ParamKind::Buffer);
    bn.running_var = store.add(prefix + ".running_var", Tensor::full({1, width}, 1.0), ad::ParamKind::Buffer);
    return bn;
}

Tensor BatchNorm::operator()(const Tensor& x, ForwardContext& ctx) const {
    if (x.rank() != 2 || x.cols() != scale.cols()) throw ShapeError("batch_norm: width mismatch");
    const std::size_t n = x.rows();
    bool batch = ctx.training;
    if (batch && n < 2) {
        if (ctx.warnings) ctx.warnings->push_back("batch_norm: batch of one row in training, using running statistics");
        batch = false;
    }
    if (!batch) {
        return (x - running_mean) / ad::sqrt(ad::clamp_min(running_var, var_floor)) * scale + shift;
    }
    Tensor mean = ad::mean(x, 0);
    Tensor centered = x - mean;
    Tensor var = ad::mean(ad::square(centered), 0);
    if (ctx.update_running_stats) {
        auto rm = running_mean.node()->value.data();
        auto rv = running_var.node()->value.data();
        const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
        for (std::size_t j = 0; j < x.cols(); ++j) {
            rm[j] = (1.0 - momentum) * rm[j] + momentum * mean.data()[j];
            rv[j] = (1.0 - momentum) * rv[j] + momentum * var.data()[j] * unbias;
        }
    }
    return centered / ad::sqrt(ad::clamp_min(var, var_floor)) * scale + shift;
}

Tensor dropout(const Tensor& x, double rate, ForwardContext& ctx) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout: rate must be in [0, 1)");
    if (!ctx.training || rate == 0.0) return x;
    if (!ctx.rng) throw ContractError("dropout: training forward pass needs an rng");
    std::bernoulli_distribution keep(1.0 - rate);
    std::vector<double> mask(x.numel());
    const double s = 1.0 / (1.0 - rate);
    for (auto& m : mask) m = keep(*ctx.rng) ? s : 0.0;
    return x * Tensor::from_data(x.shape(), std::move(mask));
}

}  // namespace hyphgt::nn
