#include "hyphgt/optim.hpp"

#include <cmath>

#include "hyphgt/errors.hpp"

namespace hyphgt::ad {

Tensor ParameterStore::add(std::string name, Tensor tensor, ParamKind kind) {
    if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
    tensor.set_requires_grad(kind != ParamKind::Buffer);
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), tensor, kind});
    return tensor;
}

bool ParameterStore::contains(const std::string& name) const { return index_.count(name) != 0; }

const Parameter& ParameterStore::entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return entries_[it->second];
}

Tensor ParameterStore::get(const std::string& name) const { return entry(name).tensor; }

std::vector<Parameter> ParameterStore::trainable() const {
    std::vector<Parameter> out;
    for (const auto& p : entries_)
        if (p.trainable()) out.push_back(p);
    return out;
}

std::size_t ParameterStore::trainable_scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : entries_)
        if (p.trainable()) n += p.tensor.numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : entries_) p.tensor.zero_grad();
}

ParameterStore::Snapshot ParameterStore::snapshot() const {
    Snapshot snap;
    for (const auto& p : entries_) {
        auto d = p.tensor.data();
        snap.emplace(p.name, std::vector<double>(d.begin(), d.end()));
    }
    return snap;
}

void ParameterStore::restore(const Snapshot& snap) {
    for (auto& p : entries_) {
        auto it = snap.find(p.name);
        if (it == snap.end()) throw ContractError("snapshot is missing parameter " + p.name);
        auto dst = p.tensor.mutable_data();
        if (it->second.size() != dst.size()) throw ShapeError("snapshot size mismatch for " + p.name);
        std::copy(it->second.begin(), it->second.end(), dst.begin());
    }
}

void adamw_update(std::span<double> param, std::span<const double> grad, Moments& moments,
                  const AdamWConfig& config, std::uint64_t t, bool decay) {
    if (grad.size() != param.size()) throw ShapeError("adamw: gradient size differs from parameter");
    if (moments.m.size() != param.size()) {
        moments.m.assign(param.size(), 0.0);
        moments.v.assign(param.size(), 0.0);
    }
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
    const double wd = decay ? config.weight_decay : 0.0;
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        moments.m[i] = config.beta1 * moments.m[i] + (1.0 - config.beta1) * g;
        moments.v[i] = config.beta2 * moments.v[i] + (1.0 - config.beta2) * g * g;
        const double mhat = moments.m[i] / bc1;
        const double vhat = moments.v[i] / bc2;
        const double theta = param[i];
        param[i] = theta - config.lr * (mhat / (std::sqrt(vhat) + config.eps)) - config.lr * wd * theta;
    }
}

void adamw_step(ParameterStore& params, OptimState& state) {
    std::vector<std::pair<const Parameter*, std::vector<double>>> work;
    for (const auto& p : params.entries()) {
        if (!p.trainable()) continue;
        auto g = p.tensor.grad();
        for (double x : g) {
            if (!std::isfinite(x)) throw NumericError("adamw: non-finite gradient in parameter " + p.name);
        }
        work.emplace_back(&p, std::move(g));
    }
    ++state.step;
    for (auto& [p, g] : work) {
        Tensor t = p->tensor;
        adamw_update(t.mutable_data(), g, state.moments[p->name], state.config, state.step,
                     p->kind == ParamKind::Weight);
    }
}

}  // namespace hyphgt::ad
