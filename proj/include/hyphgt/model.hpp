#pragma once

// Full model: shared per-type input projections feeding the hyperbolic
// transformer (global) and the heterogeneous GNN (local) branches, a convex
// blend of the two, a softmax classifier on the target node type, and a
// full-batch AdamW training loop with lowest-validation-loss selection.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hyphgt/gnn.hpp"
#include "hyphgt/graph.hpp"
#include "hyphgt/nn.hpp"
#include "hyphgt/optim.hpp"
#include "hyphgt/transformer.hpp"

namespace hyphgt::model {

using ad::Tensor;
using graph::Index;

enum class LossReduction { Sum, Mean };

struct ModelConfig {
    double lambda = 0.5;  // weight of the transformer branch
    std::size_t dim = 64;
    transformer::TransformerConfig transformer{};
    gnn::GnnConfig gnn{};
    std::size_t epochs = 300;
    std::uint64_t seed = 0;
    ad::AdamWConfig optim{};
    LossReduction reduction = LossReduction::Sum;
    bool select_best = true;
    // Training nodes per optimiser step; 0 = full batch. Every step still
    // runs the full-graph forward, only the loss is restricted.
    std::size_t batch_size = 0;

    // Keeps branch widths equal to dim; throws ContractError on bad values.
    void validate() const;
};

// z = lambda * global + (1 - lambda) * local.
Tensor fuse(const Tensor& global, const Tensor& local, double lambda);
// Row-wise softmax(z W + b).
Tensor classify(const Tensor& z, const Tensor& w, const Tensor& b);
// Negative log-probability of the true class summed (or averaged) over
// `nodes`; probabilities are floored at 1e-12 before the log.
Tensor cross_entropy(const Tensor& probs, std::span<const int> labels, std::span<const Index> nodes,
                     LossReduction reduction);

struct ForwardOutput {
    // Per type; only the target type is defined. Empty when the branch is off
    // (lambda == 0 for global, lambda == 1 for local).
    std::vector<Tensor> global;
    std::vector<Tensor> local;
    Tensor fused;                // target type
    Tensor probs;                // target type, N x C
};

class HypHGT {
  public:
    HypHGT(const graph::HeteroGraph& g, const ModelConfig& config);

    ForwardOutput forward(nn::ForwardContext& ctx) const;

    ad::ParameterStore& params() { return store_; }
    const ad::ParameterStore& params() const { return store_; }
    const ModelConfig& config() const { return config_; }
    const transformer::HypTransformer& transformer() const { return transformer_; }
    const gnn::HeteroGnn& gnn() const { return gnn_; }
    std::size_t target_type() const { return target_; }

    std::vector<std::string> curvature_names() const { return transformer_.curvature_names(); }
    std::vector<double> curvature_values() const { return transformer_.curvature_values(); }

    static bool is_transformer_param(const std::string& name);
    static bool is_gnn_param(const std::string& name);

  private:
    ModelConfig config_;
    std::mt19937_64 init_rng_;
    ad::ParameterStore store_;
    std::vector<Tensor> features_;
    std::vector<Tensor> projections_;
    std::size_t target_;
    transformer::HypTransformer transformer_;
    gnn::HeteroGnn gnn_;
    Tensor head_w_, head_b_;
};

// --- evaluation ---------------------------------------------------------------

struct EvalReport {
    double macro_f1 = 0.0;
    double micro_f1 = 0.0;
    double accuracy = 0.0;
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction]
    std::size_t count = 0;
};

// Per-class F1 = 2TP / (2TP + FP + FN), 0 when the class is absent from both
// truth and prediction; macro = unweighted mean, micro = global counts.
EvalReport compute_report(std::span<const int> truth, std::span<const int> predicted, std::size_t num_classes);

std::vector<int> predict(const Tensor& probs);

// Eval-mode forward; throws ContractError on an empty node set.
EvalReport evaluate(const HypHGT& model, const graph::HeteroGraph& g, std::span<const Index> nodes);

// --- training -----------------------------------------------------------------

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // training-mode loss behind this epoch's updates (summed over batches)
    double val_loss = 0.0;    // eval mode, after the update
    double train_accuracy = 0.0;
    double val_macro_f1 = 0.0;
    double val_micro_f1 = 0.0;
    std::vector<double> curvatures;  // after the update, order of curvature_names()
};

struct TrainState {
    std::vector<EpochLog> log;
    std::vector<std::string> curvature_names;
    std::vector<double> initial_curvatures;
    ad::OptimState optim;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    ad::ParameterStore::Snapshot best;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Full-batch training on g.split. Ends with the parameters of the epoch with
// the lowest validation loss when config.select_best is set and the split
// has validation nodes. Throws NumericError if the loss or a gradient turns
// non-finite.
TrainState train(HypHGT& model, const graph::HeteroGraph& g, const EpochCallback& on_epoch = {});

}  // namespace hyphgt::model
