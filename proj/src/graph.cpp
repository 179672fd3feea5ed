#include "hyphgt/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "hyphgt/errors.hpp"
#include "hyphgt/format.hpp"
#include "json.hpp"

namespace hyphgt::graph {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "hyphgt-graph";
constexpr int kVersion = 1;

bool safe_name(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char ch) {
        return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
    });
}

std::string where(const std::filesystem::path& file, std::size_t line) {
    return file.filename().string() + ":" + std::to_string(line);
}

// Splits one CSV line on commas, trimming surrounding blanks of each field.
std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        std::string_view f = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
        while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
        out.push_back(f);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

// Calls row(fields, line_number) for every non-empty line.
template <typename RowFn>
void read_csv(const std::filesystem::path& file, RowFn&& row) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        row(split_fields(line), lineno);
    }
}

std::ofstream open_out(const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + file.string());
    return out;
}

template <typename T>
T json_field(const json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key)) throw ValidationError(ctx + ": missing field \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(ctx + ": field \"" + key + "\" has the wrong type");
    }
}

json split_to_json(const Split& s) {
    return json{{"seed", s.seed}, {"stratified", s.stratified}, {"train", s.train}, {"val", s.val}, {"test", s.test}};
}

Split split_from_json(const json& j, const std::string& ctx) {
    Split s;
    s.seed = json_field<std::uint64_t>(j, "seed", ctx);
    s.stratified = j.value("stratified", true);
    s.train = json_field<std::vector<Index>>(j, "train", ctx);
    s.val = json_field<std::vector<Index>>(j, "val", ctx);
    s.test = json_field<std::vector<Index>>(j, "test", ctx);
    return s;
}

}  // namespace

// --- HeteroGraph --------------------------------------------------------------

std::size_t HeteroGraph::type_index(const std::string& name) const {
    for (std::size_t i = 0; i < node_types.size(); ++i)
        if (node_types[i].name == name) return i;
    throw ContractError("unknown node type '" + name + "'");
}

const NodeType& HeteroGraph::type(const std::string& name) const { return node_types[type_index(name)]; }

const Relation& HeteroGraph::relation(const std::string& name) const {
    for (const auto& r : relations)
        if (r.name == name) return r;
    throw ContractError("unknown relation '" + name + "'");
}

bool HeteroGraph::has_labels() const {
    return std::any_of(labels.begin(), labels.end(), [](int l) { return l != kUnlabeled; });
}

std::vector<Index> HeteroGraph::labeled_nodes() const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != kUnlabeled) out.push_back(static_cast<Index>(i));
    return out;
}

std::size_t HeteroGraph::total_nodes() const {
    std::size_t n = 0;
    for (const auto& t : node_types) n += t.count;
    return n;
}

std::size_t HeteroGraph::total_edges() const {
    std::size_t n = 0;
    for (const auto& r : relations) n += r.num_edges();
    return n;
}

void HeteroGraph::validate() const {
    if (node_types.size() + relations.size() <= 2)
        throw ValidationError("graph is not heterogeneous: need |node types| + |relations| > 2");
    std::set<std::string> names;
    for (const auto& t : node_types) {
        if (!safe_name(t.name)) throw ValidationError("invalid node type name '" + t.name + "'");
        if (!names.insert(t.name).second) throw ValidationError("duplicate node type '" + t.name + "'");
        if (t.feature_dim == 0) throw ValidationError("node type '" + t.name + "' has feature_dim 0");
        if (t.features.size() != t.count * t.feature_dim)
            throw ValidationError("node type '" + t.name + "': feature matrix is not count x feature_dim");
        for (double v : t.features)
            if (!std::isfinite(v)) throw ValidationError("node type '" + t.name + "': non-finite feature");
    }
    std::set<std::string> rel_names;
    for (const auto& r : relations) {
        if (!safe_name(r.name)) throw ValidationError("invalid relation name '" + r.name + "'");
        if (!rel_names.insert(r.name).second) throw ValidationError("duplicate relation '" + r.name + "'");
        if (!names.count(r.source) || !names.count(r.target))
            throw ValidationError("relation '" + r.name + "' references an unknown node type");
        if (r.src.size() != r.dst.size()) throw ValidationError("relation '" + r.name + "': ragged edge list");
        const std::size_t ns = type(r.source).count, nt = type(r.target).count;
        for (std::size_t e = 0; e < r.src.size(); ++e) {
            if (r.src[e] >= ns || r.dst[e] >= nt)
                throw ValidationError("relation '" + r.name + "': edge " + std::to_string(e) + " out of range");
        }
    }
    if (!target_type.empty() || !labels.empty()) {
        if (!names.count(target_type)) throw ValidationError("target type '" + target_type + "' is not a node type");
        if (num_classes == 0) throw ValidationError("num_classes must be positive");
        if (!labels.empty() && labels.size() != type(target_type).count)
            throw ValidationError("label vector does not cover the target type");
        for (int l : labels)
            if (l != kUnlabeled && (l < 0 || static_cast<std::size_t>(l) >= num_classes))
                throw ValidationError("label " + std::to_string(l) + " outside [0, num_classes)");
    }
    if (split) validate_split(*this, *split);
}

// --- load / save --------------------------------------------------------------

HeteroGraph load_graph(const std::filesystem::path& dir) {
    const auto meta_path = dir / "graph.json";
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw IoError("cannot open " + meta_path.string());
    json meta;
    try {
        meta = json::parse(meta_in);
    } catch (const json::parse_error& e) {
        throw ValidationError("graph.json: " + std::string(e.what()));
    }
    const std::string ctx = "graph.json";
    if (meta.value("format", std::string()) != kFormat)
        throw ValidationError("graph.json: format must be \"" + std::string(kFormat) + "\"");
    if (meta.value("version", 0) != kVersion) throw ValidationError("graph.json: unsupported version");

    HeteroGraph g;
    for (const auto& jt : json_field<json>(meta, "node_types", ctx)) {
        NodeType t;
        t.name = json_field<std::string>(jt, "name", ctx);
        t.count = json_field<std::size_t>(jt, "count", ctx);
        t.feature_dim = json_field<std::size_t>(jt, "feature_dim", ctx);
        if (!safe_name(t.name)) throw ValidationError("graph.json: invalid node type name '" + t.name + "'");
        g.node_types.push_back(std::move(t));
    }
    for (const auto& jr : json_field<json>(meta, "relations", ctx)) {
        Relation r;
        r.name = json_field<std::string>(jr, "name", ctx);
        r.source = json_field<std::string>(jr, "source", ctx);
        r.target = json_field<std::string>(jr, "target", ctx);
        if (!safe_name(r.name)) throw ValidationError("graph.json: invalid relation name '" + r.name + "'");
        g.relations.push_back(std::move(r));
    }
    g.target_type = meta.value("target_type", std::string());
    g.num_classes = meta.value("num_classes", std::size_t{0});
    if (g.node_types.size() + g.relations.size() <= 2)
        throw ValidationError("graph.json: graph is not heterogeneous: need |node types| + |relations| > 2");

    for (auto& t : g.node_types) {
        const auto file = dir / ("features." + t.name + ".csv");
        std::size_t rows = 0;
        t.features.reserve(t.count * t.feature_dim);
        read_csv(file, [&](const std::vector<std::string_view>& f, std::size_t line) {
            if (f.size() != t.feature_dim)
                throw ValidationError(where(file, line) + ": expected " + std::to_string(t.feature_dim) +
                                      " columns, found " + std::to_string(f.size()));
            if (rows >= t.count)
                throw ValidationError(where(file, line) + ": more rows than the declared count " +
                                      std::to_string(t.count));
            for (auto field : f) {
                double v = 0;
                if (!parse_number(field, v) || !std::isfinite(v))
                    throw ValidationError(where(file, line) + ": invalid number '" + std::string(field) + "'");
                t.features.push_back(v);
            }
            ++rows;
        });
        if (rows != t.count)
            throw ValidationError(file.filename().string() + ": " + std::to_string(rows) + " rows, expected " +
                                  std::to_string(t.count));
    }

    for (auto& r : g.relations) {
        const auto file = dir / ("edges." + r.name + ".csv");
        std::size_t ns = 0, nt = 0;
        try {
            ns = g.type(r.source).count;
            nt = g.type(r.target).count;
        } catch (const ContractError&) {
            throw ValidationError("graph.json: relation '" + r.name + "' references an unknown node type");
        }
        read_csv(file, [&](const std::vector<std::string_view>& f, std::size_t line) {
            Index s = 0, t = 0;
            if (f.size() != 2 || !parse_number(f[0], s) || !parse_number(f[1], t))
                throw ValidationError(where(file, line) + ": expected two non-negative integer columns");
            if (s >= ns)
                throw ValidationError(where(file, line) + ": source index " + std::to_string(s) + " >= " +
                                      std::to_string(ns));
            if (t >= nt)
                throw ValidationError(where(file, line) + ": target index " + std::to_string(t) + " >= " +
                                      std::to_string(nt));
            r.src.push_back(s);
            r.dst.push_back(t);
        });
    }

    const auto label_file = dir / "labels.csv";
    if (std::filesystem::exists(label_file)) {
        if (g.target_type.empty()) throw ValidationError("labels.csv present but graph.json has no target_type");
        std::size_t nt = 0;
        try {
            nt = g.type(g.target_type).count;
        } catch (const ContractError&) {
            throw ValidationError("graph.json: target type '" + g.target_type + "' is not a node type");
        }
        g.labels.assign(nt, kUnlabeled);
        read_csv(label_file, [&](const std::vector<std::string_view>& f, std::size_t line) {
            Index node = 0;
            long long cls = 0;
            if (f.size() != 2 || !parse_number(f[0], node) || !parse_number(f[1], cls))
                throw ValidationError(where(label_file, line) + ": expected node_index,class");
            if (node >= nt)
                throw ValidationError(where(label_file, line) + ": node index " + std::to_string(node) + " >= " +
                                      std::to_string(nt));
            if (cls < 0 || static_cast<std::size_t>(cls) >= g.num_classes)
                throw ValidationError(where(label_file, line) + ": class " + std::to_string(cls) +
                                      " outside [0, " + std::to_string(g.num_classes) + ")");
            if (g.labels[node] != kUnlabeled)
                throw ValidationError(where(label_file, line) + ": node " + std::to_string(node) + " labeled twice");
            g.labels[node] = static_cast<int>(cls);
        });
    }

    const auto split_file = dir / "splits.json";
    if (std::filesystem::exists(split_file)) {
        std::ifstream in(split_file);
        if (!in) throw IoError("cannot open " + split_file.string());
        try {
            g.split = split_from_json(json::parse(in), "splits.json");
        } catch (const json::parse_error& e) {
            throw ValidationError("splits.json: " + std::string(e.what()));
        }
    }

    g.validate();
    return g;
}

void save_graph(const HeteroGraph& g, const std::filesystem::path& dir) {
    g.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    json meta;
    meta["format"] = kFormat;
    meta["version"] = kVersion;
    meta["node_types"] = json::array();
    for (const auto& t : g.node_types)
        meta["node_types"].push_back({{"name", t.name}, {"count", t.count}, {"feature_dim", t.feature_dim}});
    meta["relations"] = json::array();
    for (const auto& r : g.relations)
        meta["relations"].push_back({{"name", r.name}, {"source", r.source}, {"target", r.target}});
    meta["target_type"] = g.target_type;
    meta["num_classes"] = g.num_classes;
    open_out(dir / "graph.json") << meta.dump(2) << '\n';

    for (const auto& t : g.node_types) {
        auto out = open_out(dir / ("features." + t.name + ".csv"));
        std::string line;
        for (std::size_t i = 0; i < t.count; ++i) {
            line.clear();
            for (std::size_t j = 0; j < t.feature_dim; ++j) {
                if (j) line += ',';
                line += format_double(t.features[i * t.feature_dim + j]);
            }
            line += '\n';
            out << line;
        }
    }
    for (const auto& r : g.relations) {
        auto out = open_out(dir / ("edges." + r.name + ".csv"));
        for (std::size_t e = 0; e < r.src.size(); ++e) out << r.src[e] << ',' << r.dst[e] << '\n';
    }
    if (g.has_labels()) {
        auto out = open_out(dir / "labels.csv");
        for (std::size_t i = 0; i < g.labels.size(); ++i)
            if (g.labels[i] != kUnlabeled) out << i << ',' << g.labels[i] << '\n';
    }
    if (g.split) open_out(dir / "splits.json") << split_to_json(*g.split).dump(2) << '\n';
}

std::vector<DirectedRelation> relations_with_inverses(const HeteroGraph& g) {
    std::vector<DirectedRelation> out;
    for (const auto& r : g.relations)
        out.push_back({r.name, g.type_index(r.source), g.type_index(r.target), r.src, r.dst, false});
    for (const auto& r : g.relations)
        out.push_back({r.name + "_inv", g.type_index(r.target), g.type_index(r.source), r.dst, r.src, true});
    return out;
}

// --- splits -------------------------------------------------------------------

Split make_split(const HeteroGraph& g, std::array<double, 3> fractions, std::uint64_t seed,
                 std::vector<std::string>* warnings) {
    double total = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) throw ContractError("split fractions must be positive");
        total += f;
    }
    if (total > 1.0 + 1e-12) throw ContractError("split fractions sum to more than 1");
    const auto labeled = g.labeled_nodes();
    if (labeled.empty()) throw ContractError("graph has no labeled nodes to split");

    std::vector<std::vector<Index>> by_class(g.num_classes);
    for (Index v : labeled) by_class[static_cast<std::size_t>(g.labels[v])].push_back(v);

    Split s;
    s.seed = seed;
    std::mt19937_64 rng(seed);
    auto take = [&](std::vector<Index>& pool) {
        std::shuffle(pool.begin(), pool.end(), rng);
        std::size_t at = 0;
        std::array<std::vector<Index>*, 3> parts{&s.train, &s.val, &s.test};
        for (std::size_t p = 0; p < 3; ++p) {
            const auto k = static_cast<std::size_t>(std::floor(fractions[p] * static_cast<double>(pool.size()) + 1e-9));
            parts[p]->insert(parts[p]->end(), pool.begin() + at, pool.begin() + at + k);
            at += k;
        }
    };

    bool small_class = false;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (!by_class[c].empty() && by_class[c].size() < fractions.size()) {
            small_class = true;
            if (warnings)
                warnings->push_back("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                                    " members, fewer than 3 split parts; using an unstratified split");
        }
    }
    if (small_class) {
        s.stratified = false;
        std::vector<Index> pool = labeled;
        take(pool);
    } else {
        for (auto& pool : by_class) take(pool);
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

void validate_split(const HeteroGraph& g, const Split& s) {
    std::vector<char> seen(g.labels.size(), 0);
    for (const auto* part : {&s.train, &s.val, &s.test}) {
        for (Index v : *part) {
            if (v >= g.labels.size() || g.labels[v] == kUnlabeled)
                throw ValidationError("split references unlabeled node " + std::to_string(v));
            if (seen[v]++) throw ValidationError("split parts overlap at node " + std::to_string(v));
        }
    }
}

// --- degrees ------------------------------------------------------------------

std::size_t DegreeHistogram::total_nodes() const {
    std::size_t n = 0;
    for (const auto& [deg, count] : counts) n += count;
    return n;
}

std::vector<std::size_t> relation_degrees(const HeteroGraph& g, const std::string& relation, Side side) {
    const Relation& r = g.relation(relation);
    const bool src = side == Side::Source;
    std::vector<std::size_t> deg(g.type(src ? r.source : r.target).count, 0);
    for (Index v : src ? r.src : r.dst) ++deg[v];
    return deg;
}

DegreeHistogram degree_histogram(const HeteroGraph& g, const std::string& relation, Side side) {
    DegreeHistogram h;
    h.relation = relation;
    h.side = side;
    for (std::size_t d : relation_degrees(g, relation, side)) ++h.counts[d];
    return h;
}

double fit_power_law_exponent(const std::vector<std::size_t>& degrees, std::size_t k_min, std::size_t min_tail) {
    std::map<std::size_t, std::size_t> hist;
    std::size_t n = 0;
    for (std::size_t d : degrees) {
        if (d >= k_min && d > 0) {
            ++hist[d];
            ++n;
        }
    }
    std::vector<double> xs, ys;
    std::size_t at_least = n;
    for (const auto& [k, count] : hist) {
        if (at_least < min_tail) break;
        xs.push_back(std::log(static_cast<double>(k)));
        ys.push_back(std::log(static_cast<double>(at_least) / static_cast<double>(n)));
        at_least -= count;
    }
    if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    return 1.0 - sxy / sxx;
}

// --- generators ---------------------------------------------------------------

std::vector<std::pair<Index, Index>> barabasi_albert(std::size_t n, std::size_t m, std::uint64_t seed) {
    if (m == 0) throw ContractError("barabasi_albert: m must be at least 1");
    if (n < m + 1) throw ContractError("barabasi_albert: need n >= m + 1");
    if (n > std::numeric_limits<Index>::max()) throw ContractError("barabasi_albert: n too large");
    std::mt19937_64 rng(seed);
    std::vector<std::pair<Index, Index>> edges;
    edges.reserve(m * (m - 1) / 2 + (n - m) * m);
    // every edge endpoint once; uniform draws from it are degree-proportional
    std::vector<Index> endpoints;
    endpoints.reserve(2 * edges.capacity());
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < i; ++j) {
            edges.emplace_back(i, j);
            endpoints.push_back(i);
            endpoints.push_back(j);
        }
    }
    std::vector<Index> chosen;
    for (std::size_t v = m; v < n; ++v) {
        chosen.clear();
        while (chosen.size() < m) {
            Index u = 0;
            if (endpoints.empty()) {
                u = static_cast<Index>(std::uniform_int_distribution<std::size_t>(0, v - 1)(rng));
            } else {
                u = endpoints[std::uniform_int_distribution<std::size_t>(0, endpoints.size() - 1)(rng)];
            }
            if (std::find(chosen.begin(), chosen.end(), u) == chosen.end()) chosen.push_back(u);
        }
        for (Index u : chosen) {
            edges.emplace_back(static_cast<Index>(v), u);
            endpoints.push_back(static_cast<Index>(v));
            endpoints.push_back(u);
        }
    }
    return edges;
}

namespace {

// Class of each value: the number of (num_classes - 1) quantile thresholds it
// strictly exceeds. Ties stay in one class.
std::vector<int> quantile_classes(const std::vector<std::size_t>& values, std::size_t num_classes) {
    std::vector<std::size_t> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> thresholds;
    for (std::size_t q = 1; q < num_classes; ++q) {
        std::size_t at = q * sorted.size() / num_classes;
        thresholds.push_back(sorted[std::min(at, sorted.size() - 1)]);
    }
    std::vector<int> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        int c = 0;
        for (std::size_t t : thresholds)
            if (values[i] > t) ++c;
        out[i] = c;
    }
    return out;
}

void class_gaussian_features(NodeType& t, const std::vector<int>& labels, std::size_t num_classes, double separation,
                             std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> means(num_classes * t.feature_dim);
    for (auto& m : means) m = separation * normal(rng);
    t.features.resize(t.count * t.feature_dim);
    for (std::size_t i = 0; i < t.count; ++i)
        for (std::size_t j = 0; j < t.feature_dim; ++j)
            t.features[i * t.feature_dim + j] = means[static_cast<std::size_t>(labels[i]) * t.feature_dim + j] + normal(rng);
}

void normal_features(NodeType& t, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    t.features.resize(t.count * t.feature_dim);
    for (auto& v : t.features) v = normal(rng);
}

}  // namespace

HeteroGraph generate_ba_hetero(const BaConfig& config, std::vector<std::pair<Index, Index>>* base_edges) {
    if (!config.general_ratio && config.ratio.size() != 3)
        throw ContractError("ratio must have three entries (types A, B, C)");
    if (config.ratio.size() < 2 || config.ratio.size() > 26) throw ContractError("ratio needs 2 to 26 entries");
    for (double r : config.ratio)
        if (!(r > 0.0) || !std::isfinite(r)) throw ContractError("ratio entries must be positive");
    if (config.num_classes < 1) throw ContractError("num_classes must be positive");
    if (config.feature_dim < 1) throw ContractError("feature_dim must be positive");

    auto edges = barabasi_albert(config.nodes, config.m, config.seed);
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

    const std::size_t k = config.ratio.size();
    const double ratio_sum = std::accumulate(config.ratio.begin(), config.ratio.end(), 0.0);
    std::vector<double> cumulative;
    double acc = 0.0;
    for (double r : config.ratio) cumulative.push_back(acc += r / ratio_sum);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<std::size_t> type_of(config.nodes);
    std::vector<Index> local(config.nodes);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t v = 0; v < config.nodes; ++v) {
        const double u = unit(rng);
        std::size_t t = 0;
        while (t + 1 < k && u >= cumulative[t]) ++t;
        type_of[v] = t;
        local[v] = static_cast<Index>(counts[t]++);
    }

    HeteroGraph g;
    for (std::size_t t = 0; t < k; ++t)
        g.node_types.push_back({std::string(1, static_cast<char>('A' + t)), counts[t], config.feature_dim, {}});
    for (std::size_t t = 1; t < k; ++t)
        g.relations.push_back({"A" + g.node_types[t].name, "A", g.node_types[t].name, {}, {}});
    for (const auto& [a, b] : edges) {
        std::size_t ta = type_of[a], tb = type_of[b];
        Index la = local[a], lb = local[b];
        if ((ta == 0) == (tb == 0)) continue;  // keep only A-to-other edges
        if (tb == 0) {
            std::swap(ta, tb);
            std::swap(la, lb);
        }
        Relation& r = g.relations[tb - 1];
        r.src.push_back(la);
        r.dst.push_back(lb);
    }
    if (base_edges) *base_edges = std::move(edges);

    std::vector<std::size_t> degree(counts[0], 0);
    for (const auto& r : g.relations)
        for (Index v : r.src) ++degree[v];
    g.target_type = "A";
    g.num_classes = config.num_classes;
    g.labels = quantile_classes(degree, config.num_classes);

    class_gaussian_features(g.node_types[0], g.labels, config.num_classes, config.class_separation, rng);
    for (std::size_t t = 1; t < k; ++t) normal_features(g.node_types[t], rng);
    g.validate();
    return g;
}

HeteroGraph toy_graph(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.3);
    HeteroGraph g;
    g.node_types = {{"A", 6, 4, {}}, {"B", 4, 3, {}}, {"C", 2, 2, {}}};
    g.target_type = "A";
    g.num_classes = 2;
    g.labels = {0, 0, 0, 1, 1, 1};
    for (auto& t : g.node_types) {
        t.features.resize(t.count * t.feature_dim);
        for (std::size_t i = 0; i < t.count; ++i) {
            const double side = i < t.count / 2 ? -1.0 : 1.0;
            for (std::size_t j = 0; j < t.feature_dim; ++j)
                t.features[i * t.feature_dim + j] = (j % 2 == 0 ? side : -0.5 * side) + noise(rng);
        }
    }
    // class-0 authors of A link into the first halves of B and C, class-1 into the second
    g.relations = {{"AB", "A", "B", {0, 0, 1, 2, 2, 3, 4, 4, 5, 5}, {0, 1, 1, 0, 1, 2, 3, 2, 3, 0}},
                   {"AC", "A", "C", {0, 1, 2, 3, 4, 5}, {0, 0, 0, 1, 1, 1}}};
    g.split = Split{seed, true, {0, 1, 3, 4}, {2}, {5}};
    g.validate();
    return g;
}

HeteroGraph power_law_vs_regular_graph(std::size_t authors, std::size_t papers, std::size_t venues,
                                       std::uint64_t seed) {
    if (authors < 2 || papers < 2 || venues < 1) throw ContractError("power_law_vs_regular_graph: sizes too small");
    std::mt19937_64 rng(seed);
    HeteroGraph g;
    g.node_types = {{"A", authors, 8, {}}, {"P", papers, 8, {}}, {"V", venues, 8, {}}};
    Relation ap{"AP", "A", "P", {}, {}};
    Relation pv{"PV", "P", "V", {}, {}};
    // each paper picks two distinct authors, preferentially by current paper count (+1 smoothing)
    std::vector<Index> endpoints;
    for (Index a = 0; a < authors; ++a) endpoints.push_back(a);
    for (Index p = 0; p < papers; ++p) {
        Index first = endpoints[std::uniform_int_distribution<std::size_t>(0, endpoints.size() - 1)(rng)];
        Index second = first;
        while (second == first) second = endpoints[std::uniform_int_distribution<std::size_t>(0, endpoints.size() - 1)(rng)];
        for (Index a : {first, second}) {
            ap.src.push_back(a);
            ap.dst.push_back(p);
            endpoints.push_back(a);
        }
        pv.src.push_back(p);
        pv.dst.push_back(static_cast<Index>(p % venues));
    }
    g.relations = {std::move(ap), std::move(pv)};
    g.target_type = "A";
    g.num_classes = 2;
    g.labels = quantile_classes(relation_degrees(g, "AP"), 2);
    class_gaussian_features(g.node_types[0], g.labels, 2, 1.0, rng);
    normal_features(g.node_types[1], rng);
    normal_features(g.node_types[2], rng);
    g.validate();
    return g;
}

}  // namespace hyphgt::graph
