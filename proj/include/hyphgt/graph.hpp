#pragma once

// Heterogeneous graphs: typed node sets with per-type features, directed typed
// relations, labels for one target node type, and splits over those labels.
//
// On-disk layout (one directory, CSV files without headers, 0-based indices):
//   graph.json              {"format": "hyphgt-graph", "version": 1,
//                            "node_types": [{"name", "count", "feature_dim"}],
//                            "relations": [{"name", "source", "target"}],
//                            "target_type", "num_classes"}
//   features.<type>.csv     count rows of feature_dim reals
//   edges.<relation>.csv    source_index,target_index
//   labels.csv              node_index,class   (target-type nodes; optional)
//   splits.json             {"seed", "train": [...], "val": [...], "test": [...]} (optional)

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hyphgt::graph {

using Index = std::uint32_t;

struct NodeType {
    std::string name;
    std::size_t count = 0;
    std::size_t feature_dim = 0;
    std::vector<double> features;  // count x feature_dim, row-major
};

struct Relation {
    std::string name;
    std::string source;
    std::string target;
    std::vector<Index> src;  // indices into the source type
    std::vector<Index> dst;  // indices into the target type

    std::size_t num_edges() const { return src.size(); }
};

struct Split {
    std::uint64_t seed = 0;
    bool stratified = true;
    std::vector<Index> train;
    std::vector<Index> val;
    std::vector<Index> test;
};

inline constexpr int kUnlabeled = -1;

struct HeteroGraph {
    std::vector<NodeType> node_types;
    std::vector<Relation> relations;
    std::string target_type;
    std::size_t num_classes = 0;
    std::vector<int> labels;  // one per target-type node, kUnlabeled when absent; empty if no labels
    std::optional<Split> split;

    std::size_t type_index(const std::string& name) const;
    const NodeType& type(const std::string& name) const;
    const Relation& relation(const std::string& name) const;
    bool has_labels() const;
    std::vector<Index> labeled_nodes() const;
    std::size_t total_nodes() const;
    std::size_t total_edges() const;

    // Checks every structural invariant; throws ValidationError.
    void validate() const;
};

HeteroGraph load_graph(const std::filesystem::path& dir);
// Writes the directory layout above; creates the directory if needed.
void save_graph(const HeteroGraph& g, const std::filesystem::path& dir);

// A relation together with its automatically added inverse ("<name>_inv",
// target -> source). Types are referenced by index into node_types.
struct DirectedRelation {
    std::string name;
    std::size_t source = 0;
    std::size_t target = 0;
    std::vector<Index> src;
    std::vector<Index> dst;
    bool inverse = false;
};

// Declared relations first, then their inverses in the same order.
std::vector<DirectedRelation> relations_with_inverses(const HeteroGraph& g);

// --- splits -------------------------------------------------------------------

// Stratified split of the labeled target nodes. Each part takes
// floor(fraction * class_size) nodes of every class. When a class has fewer
// members than there are parts, a warning is appended and the split falls back
// to an unstratified shuffle over all labeled nodes.
Split make_split(const HeteroGraph& g, std::array<double, 3> fractions, std::uint64_t seed,
                 std::vector<std::string>* warnings = nullptr);
void validate_split(const HeteroGraph& g, const Split& s);

// --- degree analysis ----------------------------------------------------------

enum class Side { Source, Target };

struct DegreeHistogram {
    std::string relation;
    Side side = Side::Source;
    std::map<std::size_t, std::size_t> counts;  // degree -> number of nodes

    std::size_t total_nodes() const;
};

// Degree of every node of the relation's source (or target) type, zeros included.
std::vector<std::size_t> relation_degrees(const HeteroGraph& g, const std::string& relation, Side side = Side::Source);
DegreeHistogram degree_histogram(const HeteroGraph& g, const std::string& relation, Side side = Side::Source);

// Exponent gamma of P(k) ~ k^-gamma from a least-squares line through the
// log-log complementary CDF, over degrees k >= k_min for which at least
// min_tail nodes have degree >= k. Returns NaN with fewer than two points.
double fit_power_law_exponent(const std::vector<std::size_t>& degrees, std::size_t k_min, std::size_t min_tail = 10);

// --- synthetic graphs ---------------------------------------------------------

// Undirected Barabasi-Albert graph: an m-clique seed, then every new node
// links to m distinct existing nodes chosen with probability proportional to
// degree. Edges are (new node, existing node).
std::vector<std::pair<Index, Index>> barabasi_albert(std::size_t n, std::size_t m, std::uint64_t seed);

struct BaConfig {
    std::size_t nodes = 10000;
    std::size_t m = 3;
    std::vector<double> ratio{6.0, 3.0, 1.0};
    std::uint64_t seed = 0;
    std::size_t feature_dim = 16;
    std::size_t num_classes = 2;
    // Scale of the per-class feature means of the labeled type.
    double class_separation = 1.0;
    // Accept ratios with other than three entries (types A, B, C, D, ...).
    bool general_ratio = false;
};

// Typed BA graph: types are drawn per node from the ratio, edges are kept only
// between the first type and another type and are oriented away from the
// first type (relations "AB", "AC", ...). The first type is labeled by
// quantile buckets of its retained degree; its features are Gaussian around a
// per-class mean, other types get standard normal features.
// `base_edges`, when given, receives the unfiltered BA edge list.
HeteroGraph generate_ba_hetero(const BaConfig& config, std::vector<std::pair<Index, Index>>* base_edges = nullptr);

// 12-node fixture: A (6 nodes, 2 classes, labeled), B (4), C (2); relations
// AB and AC with every node connected; fixed split 4/1/1.
HeteroGraph toy_graph(std::uint64_t seed = 0);

// Graph with a heavy-tailed relation and a regular one sharing a middle type:
// A -> P ("AP", power-law author degrees) and P -> V ("PV", each P node links
// to exactly one V node, V nodes receive equal loads). A is labeled by its
// AP-degree quantile.
HeteroGraph power_law_vs_regular_graph(std::size_t authors, std::size_t papers, std::size_t venues, std::uint64_t seed);

}  // namespace hyphgt::graph
