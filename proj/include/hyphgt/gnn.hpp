#pragma once

// Edge-restricted heterogeneous graph attention in Euclidean space.
//
// For relation r and head k, node v on the source side attends over its
// neighbours u in r:
//   score(v,u) = a_k . leaky_relu(W_left,k h_v + W_right,k h_u)   (W [h_v || h_u])
//   alpha(v,.) = softmax over the neighbours of v in r
//   h_r,k(v)   = elu(sum_u alpha(v,u) W_agg,k h_u)
// Per head, a node's embedding is the mean of h_r,k over the relations in
// which it has at least one neighbour (zero if there is none); heads are
// concatenated. All heads of a relation are evaluated as one d-wide product.

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "hyphgt/graph.hpp"
#include "hyphgt/nn.hpp"
#include "hyphgt/optim.hpp"

namespace hyphgt::gnn {

using ad::Tensor;

struct GnnConfig {
    std::size_t heads = 8;
    std::size_t dim = 64;  // concatenated output width
    std::size_t layers = 1;
    double slope = 0.2;

    std::size_t head_dim() const { return dim / heads; }
    void validate() const;
};

struct RelationParams {
    Tensor w_left;   // n x dim, head k in columns [k d_h, (k+1) d_h)
    Tensor w_right;  // n x dim
    Tensor w_agg;    // n x dim
    Tensor a;        // 1 x dim
};

struct RelationOutput {
    Tensor weights;  // E x heads, edge order of the relation
    Tensor embed;    // N_source x dim, zero rows for nodes without neighbours
};

// Attention weights and relation embeddings of one relation.
RelationOutput relation_forward(const Tensor& x_src, const Tensor& x_tgt, const graph::DirectedRelation& rel,
                                const RelationParams& p, std::size_t heads, double slope);

class HeteroGnn {
  public:
    // Registers parameters under "gnn." in `store`.
    HeteroGnn(const std::vector<graph::DirectedRelation>& relations, std::vector<std::size_t> type_counts,
              std::size_t input_dim,
              const GnnConfig& config, ad::ParameterStore& store, std::mt19937_64& init_rng);

    // Per-type inputs (N_t x input_dim) -> per-type N_t x dim embeddings.
    // A non-empty `wanted` mask restricts the returned types (others undefined).
    std::vector<Tensor> forward(const std::vector<Tensor>& inputs, const std::vector<char>& wanted = {}) const;

    const GnnConfig& config() const { return config_; }
    const RelationParams& params(std::size_t layer, std::size_t relation) const;
    const std::vector<graph::DirectedRelation>& relations() const { return relations_; }

  private:
    std::vector<graph::DirectedRelation> relations_;
    std::size_t num_types_;
    GnnConfig config_;
    std::vector<std::vector<RelationParams>> layers_;
    // 1 / (number of relations with a neighbour) per node, 0 for isolated nodes.
    std::vector<Tensor> inv_coverage_;
};

}  // namespace hyphgt::gnn
