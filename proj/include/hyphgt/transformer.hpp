#pragma once

// Relation-aware linear attention on Lorentz manifolds.
//
// For every directed relation (declared ones and their inverses) and head,
// queries come from the source-type nodes and keys/values from the
// target-type nodes; attention is global across the two node sets. Each
// relation lives on its own manifold with a learnable curvature c_rel; the
// per-relation outputs are moved to a shared output manifold (curvature c_o),
// mapped to the tangent space at its origin and averaged over the relations
// that cover each node type. Heads are concatenated.

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "hyphgt/graph.hpp"
#include "hyphgt/lorentz.hpp"
#include "hyphgt/nn.hpp"
#include "hyphgt/optim.hpp"

namespace hyphgt::transformer {

using ad::Tensor;

struct TransformerConfig {
    std::size_t heads = 2;
    std::size_t dim = 64;  // concatenated output width; per-head width dim / heads
    std::size_t layers = 1;
    double dropout = 0.5;
    double alpha = 1e-6;  // kernel feature constant
    double bn_momentum = 0.1;
    double bn_var_floor = 1e-5;

    std::size_t head_dim() const { return dim / heads; }
    void validate() const;  // throws ContractError
};

struct HeadParams {
    Tensor wq, bq, wk, bk, wv, bv;  // (n+1) x d_h and 1 x d_h
    Tensor wo, bo;                  // (d_h+1) x d_h and 1 x d_h
    Tensor beta;                    // 1 x d_h kernel normaliser
};

// phi(X) = (relu(X_s) + alpha) / |beta| on the spatial columns of X.
Tensor kernel_feature(const Tensor& x, double alpha, const Tensor& beta);

// Spatial output Q (K^T V) / Q (K^T 1) of kernelised attention; the
// d_h x d_h product K^T V is formed first.
Tensor linear_attention(const Tensor& qs, const Tensor& ks, const Tensor& vs);

// One relation and head: Q from xq, K and V from xkv (both on the c_in
// manifold), projected to the relation manifold by HT, kernelised, attended
// and completed with a reconstructed time coordinate. Rows follow xq.
Tensor relation_attention(const Tensor& xq, const Tensor& xkv, const HeadParams& p, const Tensor& c_in,
                          const Tensor& c_rel, double alpha);

// HT of a relation output onto the output manifold followed by the log map
// at its origin: N x d_h tangent (spatial) coordinates.
Tensor project_to_output(const Tensor& h_rel, const HeadParams& p, const Tensor& c_rel, const Tensor& c_out);

// Per-node-type mean over covering relations. `per_relation[r]` holds the
// N_source x w tangent rows of relation r and `source_type[r]` its query type.
// Types covered by no relation get an empty (undefined) tensor.
std::vector<Tensor> mean_over_relations(const std::vector<Tensor>& per_relation,
                                        const std::vector<std::size_t>& source_type, std::size_t num_types);

class HypTransformer {
  public:
    // Registers all parameters under "transformer." in `store`. `input_dim`
    // is the width of the Euclidean per-type inputs.
    HypTransformer(const std::vector<graph::DirectedRelation>& relations, std::size_t num_types,
                   std::size_t input_dim, const TransformerConfig& config, ad::ParameterStore& store,
                   std::mt19937_64& init_rng);

    // Euclidean per-type inputs (N_t x input_dim) -> per-type N_t x dim
    // embeddings. With a non-empty `wanted` mask only those types are
    // returned (others undefined) and work that cannot reach them is skipped.
    std::vector<Tensor> forward(const std::vector<Tensor>& inputs, nn::ForwardContext& ctx,
                                const std::vector<char>& wanted = {}) const;

    // Points on the input manifold: exp map at the origin of (0, x).
    Tensor embed(const Tensor& x) const;
    // Relation-specific batch norm then dropout, both applied through HR.
    Tensor normalize_regularize(const Tensor& x, std::size_t layer, std::size_t relation, nn::ForwardContext& ctx,
                                bool apply_dropout = true) const;

    const TransformerConfig& config() const { return config_; }
    const lorentz::Curvature& input_curvature() const { return c_in_; }
    const lorentz::Curvature& relation_curvature(std::size_t layer, std::size_t relation) const;
    const lorentz::Curvature& output_curvature(std::size_t layer) const;
    const HeadParams& head(std::size_t layer, std::size_t relation, std::size_t k) const;
    const std::vector<graph::DirectedRelation>& relations() const { return relations_; }

    // Names and current values of every trainable curvature, relation
    // curvatures first (layer-major), then output curvatures.
    std::vector<std::string> curvature_names() const;
    std::vector<double> curvature_values() const;

  private:
    struct RelationParams {
        lorentz::Curvature curvature;
        nn::BatchNorm bn;
        std::vector<HeadParams> heads;
    };
    struct Layer {
        std::vector<RelationParams> relations;
        lorentz::Curvature c_out;
        Tensor fallback_w, fallback_b;  // for node types no relation covers
    };

    std::vector<Tensor> layer_forward(const Layer& layer, std::size_t li, const std::vector<Tensor>& points,
                                      const std::vector<char>& needed, nn::ForwardContext& ctx) const;

    std::vector<graph::DirectedRelation> relations_;
    std::size_t num_types_;
    TransformerConfig config_;
    lorentz::Curvature c_in_;
    std::vector<Layer> layers_;
    std::vector<char> covered_;
};

}  // namespace hyphgt::transformer
