#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hyphgt/tensor.hpp"

namespace hyphgt::ad {

enum class ParamKind {
    Weight,     // trained, weight-decayed
    Curvature,  // trained, never decayed
    Buffer,     // not trained (running statistics, fixed curvatures)
};

struct Parameter {
    std::string name;
    Tensor tensor;
    ParamKind kind = ParamKind::Weight;

    bool trainable() const { return kind != ParamKind::Buffer; }
};

// Named, ordered collection of leaf tensors owned by a model.
class ParameterStore {
  public:
    // Registers a leaf; trainable kinds get requires_grad. Names are unique.
    Tensor add(std::string name, Tensor tensor, ParamKind kind = ParamKind::Weight);

    bool contains(const std::string& name) const;
    Tensor get(const std::string& name) const;
    const Parameter& entry(const std::string& name) const;

    const std::vector<Parameter>& entries() const { return entries_; }
    std::vector<Parameter> trainable() const;
    std::size_t trainable_scalar_count() const;

    void zero_grad();

    // Values of every entry (buffers included), keyed by name.
    using Snapshot = std::map<std::string, std::vector<double>>;
    Snapshot snapshot() const;
    void restore(const Snapshot& snap);

  private:
    std::vector<Parameter> entries_;
    std::map<std::string, std::size_t> index_;
};

struct AdamWConfig {
    double lr = 1e-4;
    double weight_decay = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct Moments {
    std::vector<double> m;
    std::vector<double> v;
};

struct OptimState {
    AdamWConfig config;
    std::uint64_t step = 0;
    std::map<std::string, Moments> moments;
};

// One decoupled-weight-decay Adam update on a raw parameter buffer. `t` is
// the 1-based step index used for bias correction.
void adamw_update(std::span<double> param, std::span<const double> grad, Moments& moments,
                  const AdamWConfig& config, std::uint64_t t, bool decay);

// Updates every trainable entry of the store from its current gradient.
// Throws NumericError naming the parameter if any gradient is non-finite;
// in that case no parameter is modified.
void adamw_step(ParameterStore& params, OptimState& state);

}  // namespace hyphgt::ad
