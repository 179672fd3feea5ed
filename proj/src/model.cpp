#include "hyphgt/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hyphgt/errors.hpp"

namespace hyphgt::model {

void ModelConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractError("lambda must be in [0, 1]");
    if (dim == 0) throw ContractError("dim must be positive");
    if (transformer.dim != dim || gnn.dim != dim) throw ContractError("branch widths must equal dim");
    transformer.validate();
    gnn.validate();
    if (!(optim.lr > 0.0) || !(optim.weight_decay >= 0.0)) throw ContractError("invalid optimiser settings");
}

Tensor fuse(const Tensor& global, const Tensor& local, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractError("fuse: lambda must be in [0, 1]");
    if (global.shape() != local.shape()) throw ShapeError("fuse: branch outputs differ in shape");
    return global * lambda + local * (1.0 - lambda);
}

Tensor classify(const Tensor& z, const Tensor& w, const Tensor& b) { return ad::softmax(ad::matmul(z, w) + b, 1); }

Tensor cross_entropy(const Tensor& probs, std::span<const int> labels, std::span<const Index> nodes,
                     LossReduction reduction) {
    if (nodes.empty()) throw ContractError("cross_entropy: empty node set");
    const std::size_t c = probs.cols();
    std::vector<double> onehot(nodes.size() * c, 0.0);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i] >= labels.size()) throw ContractError("cross_entropy: node outside the label vector");
        const int y = labels[nodes[i]];
        if (y < 0 || static_cast<std::size_t>(y) >= c) throw ContractError("cross_entropy: label outside [0, C)");
        onehot[i * c + static_cast<std::size_t>(y)] = 1.0;
    }
    Tensor picked = ad::gather_rows(probs, nodes);
    Tensor nll = -ad::sum(ad::log(ad::clamp_min(picked, 1e-12)) * Tensor::from_data({nodes.size(), c}, onehot));
    return reduction == LossReduction::Mean ? nll / static_cast<double>(nodes.size()) : nll;
}

namespace {

std::vector<Tensor> feature_tensors(const graph::HeteroGraph& g) {
    std::vector<Tensor> out;
    for (const auto& t : g.node_types) {
        if (t.count == 0) throw ContractError("node type '" + t.name + "' has no nodes");
        out.push_back(Tensor::from_data({t.count, t.feature_dim}, t.features));
    }
    return out;
}

std::vector<Tensor> make_projections(const graph::HeteroGraph& g, std::size_t dim, ad::ParameterStore& store,
                                     std::mt19937_64& rng) {
    std::vector<Tensor> out;
    for (const auto& t : g.node_types) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.feature_dim));
        out.push_back(store.add("proj." + t.name, nn::uniform(rng, t.feature_dim, dim, bound)));
    }
    return out;
}

std::vector<std::size_t> type_counts(const graph::HeteroGraph& g) {
    std::vector<std::size_t> out;
    for (const auto& t : g.node_types) out.push_back(t.count);
    return out;
}

const ModelConfig& checked(const ModelConfig& c) {
    c.validate();
    return c;
}

}  // namespace

HypHGT::HypHGT(const graph::HeteroGraph& g, const ModelConfig& config)
    : config_(checked(config)),
      init_rng_(config.seed),
      features_(feature_tensors(g)),
      projections_(make_projections(g, config.dim, store_, init_rng_)),
      target_(g.type_index(g.target_type)),
      transformer_(graph::relations_with_inverses(g), g.node_types.size(), config.dim, config.transformer, store_,
                   init_rng_),
      gnn_(graph::relations_with_inverses(g), type_counts(g), config.dim, config.gnn, store_, init_rng_) {
    if (g.num_classes < 1) throw ContractError("model needs at least one class");
    const double bound = 1.0 / std::sqrt(static_cast<double>(config_.dim));
    head_w_ = store_.add("head.w", nn::uniform(init_rng_, config_.dim, g.num_classes, bound));
    head_b_ = store_.add("head.b", Tensor::zeros({1, g.num_classes}));
}

ForwardOutput HypHGT::forward(nn::ForwardContext& ctx) const {
    std::vector<Tensor> inputs;
    for (std::size_t t = 0; t < features_.size(); ++t) inputs.push_back(ad::matmul(features_[t], projections_[t]));
    ForwardOutput out;
    const double lambda = config_.lambda;
    std::vector<char> wanted(features_.size(), 0);
    wanted[target_] = 1;
    if (lambda > 0.0) out.global = transformer_.forward(inputs, ctx, wanted);
    if (lambda < 1.0) out.local = gnn_.forward(inputs, wanted);
    if (lambda == 1.0) out.fused = out.global[target_];
    else if (lambda == 0.0) out.fused = out.local[target_];
    else out.fused = fuse(out.global[target_], out.local[target_], lambda);
    out.probs = classify(out.fused, head_w_, head_b_);
    return out;
}

bool HypHGT::is_transformer_param(const std::string& name) { return name.rfind("transformer.", 0) == 0; }
bool HypHGT::is_gnn_param(const std::string& name) { return name.rfind("gnn.", 0) == 0; }

// --- evaluation ---------------------------------------------------------------

EvalReport compute_report(std::span<const int> truth, std::span<const int> predicted, std::size_t num_classes) {
    if (truth.size() != predicted.size()) throw ShapeError("compute_report: length mismatch");
    if (truth.empty()) throw ContractError("compute_report: empty node set");
    EvalReport r;
    r.count = truth.size();
    r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto t = static_cast<std::size_t>(truth[i]), p = static_cast<std::size_t>(predicted[i]);
        if (t >= num_classes || p >= num_classes) throw ContractError("compute_report: class outside [0, C)");
        ++r.confusion[t][p];
        correct += t == p;
    }
    std::size_t tp_all = 0, fp_all = 0, fn_all = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::size_t tp = r.confusion[c][c], fp = 0, fn = 0;
        for (std::size_t o = 0; o < num_classes; ++o) {
            if (o == c) continue;
            fp += r.confusion[o][c];
            fn += r.confusion[c][o];
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn;
        r.precision.push_back(tp + fp ? double(tp) / double(tp + fp) : 0.0);
        r.recall.push_back(tp + fn ? double(tp) / double(tp + fn) : 0.0);
        const std::size_t denom = 2 * tp + fp + fn;
        r.f1.push_back(denom ? 2.0 * double(tp) / double(denom) : 0.0);
    }
    r.macro_f1 = 0.0;
    for (double f : r.f1) r.macro_f1 += f;
    r.macro_f1 /= static_cast<double>(num_classes);
    r.micro_f1 = 2.0 * double(tp_all) / double(2 * tp_all + fp_all + fn_all);
    r.accuracy = double(correct) / double(truth.size());
    return r;
}

std::vector<int> predict(const Tensor& probs) {
    std::vector<int> out(probs.rows());
    const std::size_t c = probs.cols();
    auto v = probs.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto row = v.subspan(i * c, c);
        out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

namespace {

EvalReport report_for(const Tensor& probs, const graph::HeteroGraph& g, std::span<const Index> nodes) {
    if (nodes.empty()) throw ContractError("evaluate: empty node set");
    const auto pred = predict(probs);
    std::vector<int> truth, got;
    for (Index v : nodes) {
        truth.push_back(g.labels.at(v));
        got.push_back(pred.at(v));
    }
    return compute_report(truth, got, g.num_classes);
}

}  // namespace

EvalReport evaluate(const HypHGT& model, const graph::HeteroGraph& g, std::span<const Index> nodes) {
    ad::NoGradGuard no_grad;
    nn::ForwardContext ctx;
    return report_for(model.forward(ctx).probs, g, nodes);
}

// --- training -----------------------------------------------------------------

TrainState train(HypHGT& model, const graph::HeteroGraph& g, const EpochCallback& on_epoch) {
    if (!g.split) throw ContractError("train: graph has no split");
    if (!g.has_labels()) throw ContractError("train: graph has no labels");
    const auto& split = *g.split;
    if (split.train.empty()) throw ContractError("train: empty training split");
    const ModelConfig& cfg = model.config();

    TrainState state;
    state.optim.config = cfg.optim;
    state.curvature_names = model.curvature_names();
    state.initial_curvatures = model.curvature_values();
    state.best_val_loss = std::numeric_limits<double>::infinity();
    std::mt19937_64 dropout_rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);
    auto& store = model.params();
    std::vector<Index> order(split.train.begin(), split.train.end());
    const bool batched = cfg.batch_size > 0 && cfg.batch_size < order.size();
    const std::size_t batch = batched ? cfg.batch_size : order.size();
    std::mt19937_64 batch_rng(cfg.seed ^ 0x2545f4914f6cdd1dULL);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochLog row;
        row.epoch = epoch;
        try {
            if (batched) std::shuffle(order.begin(), order.end(), batch_rng);
            for (std::size_t begin = 0; begin < order.size(); begin += batch) {
                const std::span<const Index> nodes(order.data() + begin, std::min(batch, order.size() - begin));
                nn::ForwardContext ctx;
                ctx.training = true;
                ctx.rng = &dropout_rng;
                auto out = model.forward(ctx);
                Tensor loss = cross_entropy(out.probs, g.labels, nodes, cfg.reduction);
                row.train_loss += loss.item();
                store.zero_grad();
                loss.backward();
                ad::adamw_step(store, state.optim);
            }

            ad::NoGradGuard no_grad;
            nn::ForwardContext eval_ctx;
            auto ev = model.forward(eval_ctx);
            row.train_accuracy = report_for(ev.probs, g, split.train).accuracy;
            if (!split.val.empty()) {
                row.val_loss = cross_entropy(ev.probs, g.labels, split.val, cfg.reduction).item();
                auto rep = report_for(ev.probs, g, split.val);
                row.val_macro_f1 = rep.macro_f1;
                row.val_micro_f1 = rep.micro_f1;
            }
        } catch (const DomainError& e) {
            throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
        }
        if (!std::isfinite(row.train_loss) || !std::isfinite(row.val_loss))
            throw NumericError("epoch " + std::to_string(epoch) + ": non-finite loss");
        row.curvatures = model.curvature_values();
        if (!split.val.empty() && row.val_loss < state.best_val_loss) {
            state.best_val_loss = row.val_loss;
            state.best_epoch = epoch;
            if (cfg.select_best) state.best = store.snapshot();
        }
        state.log.push_back(row);
        if (on_epoch) on_epoch(state.log.back());
    }
    if (cfg.select_best && !state.best.empty()) store.restore(state.best);
    return state;
}

}  // namespace hyphgt::model
