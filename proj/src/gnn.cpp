#include "hyphgt/gnn.hpp"

#include <cmath>

#include "hyphgt/errors.hpp"

namespace hyphgt::gnn {

void GnnConfig::validate() const {
    if (heads == 0 || dim == 0 || dim % heads != 0) throw ContractError("gnn: heads must divide dim");
    if (layers < 1 || layers > 3) throw ContractError("gnn: layers must be in 1..3");
    if (!(slope >= 0.0)) throw ContractError("gnn: negative leaky-relu slope");
}

namespace {

// dim x heads indicator: column k sums the entries of head k.
Tensor head_blocks(std::size_t dim, std::size_t heads) {
    const std::size_t dh = dim / heads;
    std::vector<double> v(dim * heads, 0.0);
    for (std::size_t j = 0; j < dim; ++j) v[j * heads + j / dh] = 1.0;
    return Tensor::from_data({dim, heads}, std::move(v));
}

}  // namespace

RelationOutput relation_forward(const Tensor& x_src, const Tensor& x_tgt, const graph::DirectedRelation& rel,
                                const RelationParams& p, std::size_t heads, double slope) {
    const std::size_t ns = x_src.rows();
    const std::size_t dim = p.w_agg.cols();
    const Tensor blocks = head_blocks(dim, heads);
    RelationOutput out;
    if (rel.src.empty()) {
        out.weights = Tensor::zeros({0, heads});
        out.embed = Tensor::zeros({ns, dim});
        return out;
    }
    Tensor left = ad::gather_rows(ad::matmul(x_src, p.w_left), rel.src);
    Tensor right = ad::gather_rows(ad::matmul(x_tgt, p.w_right), rel.dst);
    Tensor scores = ad::matmul(ad::leaky_relu(left + right, slope) * p.a, blocks);
    out.weights = ad::segment_softmax(scores, rel.src, ns);
    Tensor messages = ad::gather_rows(ad::matmul(x_tgt, p.w_agg), rel.dst);
    Tensor weighted = messages * ad::matmul(out.weights, ad::transpose(blocks));
    out.embed = ad::elu(ad::scatter_add_rows(weighted, rel.src, ns));
    return out;
}

HeteroGnn::HeteroGnn(const std::vector<graph::DirectedRelation>& relations, std::vector<std::size_t> type_counts,
                     std::size_t input_dim, const GnnConfig& config, ad::ParameterStore& store,
                     std::mt19937_64& init_rng)
    : relations_(relations), num_types_(type_counts.size()), config_(config) {
    config_.validate();
    for (std::size_t li = 0; li < config_.layers; ++li) {
        const std::size_t n = li == 0 ? input_dim : config_.dim;
        const double bound = 1.0 / std::sqrt(static_cast<double>(n));
        const double bound_a = 1.0 / std::sqrt(static_cast<double>(config_.head_dim()));
        std::vector<RelationParams> layer;
        for (const auto& rel : relations_) {
            const std::string p = "gnn.l" + std::to_string(li) + "." + rel.name + ".";
            RelationParams rp;
            rp.w_left = store.add(p + "w_left", nn::uniform(init_rng, n, config_.dim, bound));
            rp.w_right = store.add(p + "w_right", nn::uniform(init_rng, n, config_.dim, bound));
            rp.w_agg = store.add(p + "w_agg", nn::uniform(init_rng, n, config_.dim, bound));
            rp.a = store.add(p + "a", nn::uniform(init_rng, 1, config_.dim, bound_a));
            layer.push_back(std::move(rp));
        }
        layers_.push_back(std::move(layer));
    }

    // per node: 1 / number of relations in which it has a neighbour, 0 if none
    std::vector<std::vector<double>> cov(num_types_);
    for (std::size_t t = 0; t < num_types_; ++t) cov[t].assign(type_counts[t], 0.0);
    for (const auto& rel : relations_) {
        std::vector<char> seen(type_counts[rel.source], 0);
        for (auto v : rel.src) {
            if (v >= seen.size()) throw ShapeError("gnn: edge source outside its node type");
            if (!seen[v]) {
                seen[v] = 1;
                cov[rel.source][v] += 1.0;
            }
        }
    }
    for (std::size_t t = 0; t < num_types_; ++t) {
        for (auto& x : cov[t]) x = x > 0.0 ? 1.0 / x : 0.0;
        inv_coverage_.push_back(Tensor::from_data({type_counts[t], 1}, std::move(cov[t])));
    }
}

std::vector<Tensor> HeteroGnn::forward(const std::vector<Tensor>& inputs, const std::vector<char>& wanted) const {
    if (inputs.size() != num_types_) throw ShapeError("gnn: one input matrix per node type expected");
    if (!wanted.empty() && wanted.size() != num_types_) throw ShapeError("gnn: wanted mask size");
    const std::size_t nl = layers_.size();
    std::vector<std::vector<char>> out(nl);
    out[nl - 1] = wanted.empty() ? std::vector<char>(num_types_, 1) : wanted;
    for (std::size_t l = nl - 1; l > 0; --l) {
        out[l - 1].assign(num_types_, 0);
        for (const auto& rel : relations_)
            if (out[l][rel.source]) out[l - 1][rel.source] = out[l - 1][rel.target] = 1;
    }
    for (std::size_t t = 0; t < num_types_; ++t)
        if (inputs[t].rows() != inv_coverage_[t].rows()) throw ShapeError("gnn: input rows differ from the node count");
    std::vector<Tensor> h = inputs;
    for (std::size_t li = 0; li < nl; ++li) {
        const auto& layer = layers_[li];
        const auto& need = out[li];
        std::vector<Tensor> sums(num_types_);
        for (std::size_t r = 0; r < relations_.size(); ++r) {
            const auto& rel = relations_[r];
            if (rel.src.empty() || !need[rel.source]) continue;
            Tensor e = relation_forward(h[rel.source], h[rel.target], rel, layer[r], config_.heads, config_.slope).embed;
            sums[rel.source] = sums[rel.source].defined() ? sums[rel.source] + e : e;
        }
        std::vector<Tensor> next(num_types_);
        for (std::size_t t = 0; t < num_types_; ++t) {
            if (!need[t]) continue;
            const std::size_t rows = inv_coverage_[t].rows();
            if (!sums[t].defined()) {
                next[t] = Tensor::zeros({rows, config_.dim});
                continue;
            }
            next[t] = sums[t] * inv_coverage_[t];
        }
        h = std::move(next);
    }
    return h;
}

const RelationParams& HeteroGnn::params(std::size_t layer, std::size_t relation) const {
    return layers_.at(layer).at(relation);
}

}  // namespace hyphgt::gnn
