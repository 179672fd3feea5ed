#include "hyphgt/transformer.hpp"

#include <algorithm>
#include <cmath>

#include "hyphgt/errors.hpp"

namespace hyphgt::transformer {

namespace lz = lorentz;

void TransformerConfig::validate() const {
    if (heads == 0 || dim == 0 || dim % heads != 0) throw ContractError("transformer: heads must divide dim");
    if (layers < 1 || layers > 4) throw ContractError("transformer: layers must be in 1..4");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("transformer: dropout must be in [0, 1)");
    if (!(alpha > 0.0)) throw ContractError("transformer: alpha must be positive");
}

Tensor kernel_feature(const Tensor& x, double alpha, const Tensor& beta) {
    if (x.rank() != 2 || x.cols() < 2) throw ShapeError("kernel_feature: expected N x (n+1) points");
    const std::size_t rows = x.rows(), w = x.cols(), d = w - 1;
    if (beta.numel() != d) throw ShapeError("kernel_feature: beta width differs from the spatial width");
    double bb = 0.0;
    for (double b : beta.data()) bb += b * b;
    if (!(bb > 0.0)) throw DomainError("kernel_feature: beta has zero norm");
    const double norm = std::sqrt(bb);
    auto xv = x.data();
    std::vector<double> out(rows * d);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = (std::max(xv[i * w + 1 + j], 0.0) + alpha) / norm;
    return ad::custom_op("kernel_feature", {rows, d}, std::move(out), {x, beta}, [rows, d, w, norm](ad::Node& o) {
        ad::Node& nx = *o.inputs[0];
        ad::Node& nb = *o.inputs[1];
        const auto& g = o.grad;
        if (nx.requires_grad) {
            auto& gx = nx.grad_buffer();
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    if (nx.value[i * w + 1 + j] > 0.0) gx[i * w + 1 + j] += g[i * d + j] / norm;
        }
        if (nb.requires_grad) {
            double dot = 0.0;
            for (std::size_t k = 0; k < g.size(); ++k) dot += g[k] * o.value[k];
            auto& gb = nb.grad_buffer();
            for (std::size_t j = 0; j < d; ++j) gb[j] -= dot * nb.value[j] / (norm * norm);
        }
    });
}

Tensor linear_attention(const Tensor& qs, const Tensor& ks, const Tensor& vs) {
    if (ks.rows() != vs.rows()) throw ShapeError("linear_attention: keys and values differ in length");
    Tensor kv = ad::matmul(ad::transpose(ks), vs);
    Tensor num = ad::matmul(qs, kv);
    Tensor den = ad::matmul(qs, ad::transpose(ad::sum(ks, 0)));
    for (double d : den.data())
        if (!(d > 0.0)) throw DomainError("linear_attention: non-positive normaliser");
    return num / den;
}

Tensor relation_attention(const Tensor& xq, const Tensor& xkv, const HeadParams& p, const Tensor& c_in,
                          const Tensor& c_rel, double alpha) {
    Tensor q = lz::ht(xq, p.wq, p.bq, c_in, c_rel);
    Tensor k = lz::ht(xkv, p.wk, p.bk, c_in, c_rel);
    Tensor v = lz::ht(xkv, p.wv, p.bv, c_in, c_rel);
    Tensor hs = linear_attention(kernel_feature(q, alpha, p.beta), kernel_feature(k, alpha, p.beta),
                                 kernel_feature(v, alpha, p.beta));
    return lz::time_reconstruct(hs, c_rel);
}

Tensor project_to_output(const Tensor& h_rel, const HeadParams& p, const Tensor& c_rel, const Tensor& c_out) {
    return lz::log_map_origin(lz::ht(h_rel, p.wo, p.bo, c_rel, c_out), c_out);
}

std::vector<Tensor> mean_over_relations(const std::vector<Tensor>& per_relation,
                                        const std::vector<std::size_t>& source_type, std::size_t num_types) {
    std::vector<Tensor> sums(num_types);
    std::vector<std::size_t> counts(num_types, 0);
    for (std::size_t r = 0; r < per_relation.size(); ++r) {
        const std::size_t t = source_type[r];
        sums[t] = counts[t] == 0 ? per_relation[r] : sums[t] + per_relation[r];
        ++counts[t];
    }
    for (std::size_t t = 0; t < num_types; ++t)
        if (counts[t] > 1) sums[t] = sums[t] / static_cast<double>(counts[t]);
    return sums;
}

HypTransformer::HypTransformer(const std::vector<graph::DirectedRelation>& relations, std::size_t num_types,
                               std::size_t input_dim, const TransformerConfig& config, ad::ParameterStore& store,
                               std::mt19937_64& init_rng)
    : relations_(relations), num_types_(num_types), config_(config), c_in_(lz::Curvature::make(-1.0, false)) {
    config_.validate();
    if (input_dim == 0) throw ContractError("transformer: input_dim must be positive");
    covered_.assign(num_types, 0);
    for (const auto& r : relations_) covered_[r.source] = 1;

    const std::size_t dh = config_.head_dim();
    const double theta0 = lz::Curvature::theta_for(-1.0);
    for (std::size_t li = 0; li < config_.layers; ++li) {
        const std::size_t n = li == 0 ? input_dim : config_.dim;
        const std::string lp = "transformer.l" + std::to_string(li) + ".";
        Layer layer;
        for (const auto& rel : relations_) {
            const std::string rp = lp + rel.name + ".";
            RelationParams rp_params;
            rp_params.curvature =
                lz::Curvature(store.add(rp + "curvature", Tensor::scalar(theta0), ad::ParamKind::Curvature), true);
            rp_params.bn = nn::BatchNorm::create(store, rp + "bn", n);
            rp_params.bn.momentum = config_.bn_momentum;
            rp_params.bn.var_floor = config_.bn_var_floor;
            const double bound_in = 1.0 / std::sqrt(static_cast<double>(n + 1));
            const double bound_out = 1.0 / std::sqrt(static_cast<double>(dh + 1));
            for (std::size_t k = 0; k < config_.heads; ++k) {
                const std::string hp = rp + "h" + std::to_string(k) + ".";
                HeadParams h;
                h.wq = store.add(hp + "wq", nn::uniform(init_rng, n + 1, dh, bound_in));
                h.bq = store.add(hp + "bq", Tensor::zeros({1, dh}));
                h.wk = store.add(hp + "wk", nn::uniform(init_rng, n + 1, dh, bound_in));
                h.bk = store.add(hp + "bk", Tensor::zeros({1, dh}));
                h.wv = store.add(hp + "wv", nn::uniform(init_rng, n + 1, dh, bound_in));
                h.bv = store.add(hp + "bv", Tensor::zeros({1, dh}));
                h.wo = store.add(hp + "wo", nn::uniform(init_rng, dh + 1, dh, bound_out));
                h.bo = store.add(hp + "bo", Tensor::zeros({1, dh}));
                h.beta = store.add(hp + "beta", Tensor::full({1, dh}, 1.0));
                rp_params.heads.push_back(std::move(h));
            }
            layer.relations.push_back(std::move(rp_params));
        }
        layer.c_out =
            lz::Curvature(store.add(lp + "c_out", Tensor::scalar(theta0), ad::ParamKind::Curvature), true);
        if (std::find(covered_.begin(), covered_.end(), 0) != covered_.end()) {
            layer.fallback_w = store.add(lp + "fallback.w",
                                         nn::uniform(init_rng, n + 1, config_.dim, 1.0 / std::sqrt(double(n + 1))));
            layer.fallback_b = store.add(lp + "fallback.b", Tensor::zeros({1, config_.dim}));
        }
        layers_.push_back(std::move(layer));
    }
}

Tensor HypTransformer::embed(const Tensor& x) const { return lz::exp_map_origin(x, c_in_.value()); }

Tensor HypTransformer::normalize_regularize(const Tensor& x, std::size_t layer, std::size_t relation,
                                            nn::ForwardContext& ctx, bool apply_dropout) const {
    const RelationParams& rp = layers_.at(layer).relations.at(relation);
    const Tensor c = c_in_.value();
    Tensor out = lz::hr(x, [&](const Tensor& s) { return rp.bn(s, ctx); }, c, c);
    if (apply_dropout && ctx.training && config_.dropout > 0.0)
        out = lz::hr(out, [&](const Tensor& s) { return nn::dropout(s, config_.dropout, ctx); }, c, c);
    return out;
}

std::vector<Tensor> HypTransformer::layer_forward(const Layer& layer, std::size_t li,
                                                  const std::vector<Tensor>& points, const std::vector<char>& needed,
                                                  nn::ForwardContext& ctx) const {
    const Tensor c_in = c_in_.value();
    const Tensor c_out = layer.c_out.value();
    std::vector<std::vector<Tensor>> per_head(config_.heads);
    std::vector<std::size_t> source_type;
    for (std::size_t r = 0; r < relations_.size(); ++r) {
        const auto& rel = relations_[r];
        if (!needed[rel.source]) continue;
        const RelationParams& rp = layer.relations[r];
        source_type.push_back(rel.source);
        const bool self = rel.source == rel.target;
        const std::size_t ns = points[rel.source].rows();
        Tensor joint = self ? points[rel.source] : ad::concat({points[rel.source], points[rel.target]}, 0);
        Tensor x = normalize_regularize(joint, li, r, ctx);
        const Tensor c_rel = rp.curvature.value();
        for (std::size_t k = 0; k < config_.heads; ++k) {
            Tensor xq = self ? x : ad::slice(x, 0, 0, ns);
            Tensor xkv = self ? x : ad::slice(x, 0, ns, x.rows());
            Tensor h = relation_attention(xq, xkv, rp.heads[k], c_in, c_rel, config_.alpha);
            per_head[k].push_back(project_to_output(h, rp.heads[k], c_rel, c_out));
        }
    }
    std::vector<std::vector<Tensor>> means;
    for (std::size_t k = 0; k < config_.heads; ++k)
        means.push_back(mean_over_relations(per_head[k], source_type, num_types_));

    std::vector<Tensor> out(num_types_);
    for (std::size_t t = 0; t < num_types_; ++t) {
        if (!needed[t]) continue;
        if (covered_[t]) {
            std::vector<Tensor> heads;
            for (std::size_t k = 0; k < config_.heads; ++k) heads.push_back(means[k][t]);
            out[t] = config_.heads == 1 ? heads[0] : ad::concat(heads, 1);
        } else {
            out[t] = lz::log_map_origin(lz::ht(points[t], layer.fallback_w, layer.fallback_b, c_in, c_out), c_out);
        }
    }
    return out;
}

std::vector<Tensor> HypTransformer::forward(const std::vector<Tensor>& inputs, nn::ForwardContext& ctx,
                                            const std::vector<char>& wanted) const {
    if (inputs.size() != num_types_) throw ShapeError("transformer: one input matrix per node type expected");
    if (!wanted.empty() && wanted.size() != num_types_) throw ShapeError("transformer: wanted mask size");
    // out[l]: types layer l must emit; layer 0 reads `in`
    const std::size_t nl = layers_.size();
    std::vector<std::vector<char>> out(nl);
    out[nl - 1] = wanted.empty() ? std::vector<char>(num_types_, 1) : wanted;
    std::vector<char> in;
    for (std::size_t l = nl; l-- > 0;) {
        in.assign(num_types_, 0);
        for (const auto& rel : relations_)
            if (out[l][rel.source]) in[rel.source] = in[rel.target] = 1;
        for (std::size_t t = 0; t < num_types_; ++t)
            if (out[l][t] && !covered_[t]) in[t] = 1;
        if (l > 0) out[l - 1] = in;
    }
    std::vector<Tensor> points(num_types_);
    for (std::size_t t = 0; t < num_types_; ++t)
        if (in[t]) points[t] = embed(inputs[t]);
    std::vector<Tensor> h;
    for (std::size_t li = 0; li < nl; ++li) {
        h = layer_forward(layers_[li], li, points, out[li], ctx);
        if (li + 1 < nl) {
            for (std::size_t t = 0; t < num_types_; ++t) points[t] = h[t].defined() ? embed(h[t]) : Tensor();
        }
    }
    return h;
}

const lz::Curvature& HypTransformer::relation_curvature(std::size_t layer, std::size_t relation) const {
    return layers_.at(layer).relations.at(relation).curvature;
}

const lz::Curvature& HypTransformer::output_curvature(std::size_t layer) const { return layers_.at(layer).c_out; }

const HeadParams& HypTransformer::head(std::size_t layer, std::size_t relation, std::size_t k) const {
    return layers_.at(layer).relations.at(relation).heads.at(k);
}

std::vector<std::string> HypTransformer::curvature_names() const {
    std::vector<std::string> names;
    auto prefix = [&](std::size_t li) { return layers_.size() == 1 ? std::string() : "l" + std::to_string(li) + "."; };
    for (std::size_t li = 0; li < layers_.size(); ++li)
        for (const auto& rel : relations_) names.push_back(prefix(li) + rel.name);
    for (std::size_t li = 0; li < layers_.size(); ++li) names.push_back(prefix(li) + "c_out");
    return names;
}

std::vector<double> HypTransformer::curvature_values() const {
    std::vector<double> out;
    for (const auto& layer : layers_)
        for (const auto& rp : layer.relations) out.push_back(rp.curvature.get());
    for (const auto& layer : layers_) out.push_back(layer.c_out.get());
    return out;
}

}  // namespace hyphgt::transformer
