#include "cli.hpp"

#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <new>
#include <sstream>

#include "CLI11.hpp"
#include "hyphgt/errors.hpp"
#include "hyphgt/format.hpp"

#ifndef HYPHGT_GIT_DESCRIBE
#define HYPHGT_GIT_DESCRIBE "unknown"
#endif

namespace hyphgt::cli {

namespace fs = std::filesystem;
using ad::Tensor;
using nlohmann::json;

std::string git_describe() { return HYPHGT_GIT_DESCRIBE; }

namespace {

constexpr const char* kRunFormat = "hyphgt-run";
constexpr const char* kCheckpointFormat = "hyphgt-checkpoint";

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void make_dir(const std::string& dir) {
    if (dir.empty()) throw UsageError("--out is required");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

std::string absolute(const std::string& p) { return fs::weakly_canonical(fs::absolute(p)).string(); }

template <class T>
T field(const json& j, const char* key, const std::string& ctx) {
    const json& v = j.at(key);
    if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw UsageError(ctx + key + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_unsigned()) throw UsageError(ctx + key + ": expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw UsageError(ctx + key + ": expected a number");
    } else {
        if (!v.is_string()) throw UsageError(ctx + key + ": expected a string");
    }
    return v.get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& ctx) {
    if (!j.is_object()) throw UsageError(ctx + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
            throw UsageError("unknown config key '" + ctx + key + "'");
    }
}

std::array<double, 3> parse_split(const std::string& text) {
    auto v = parse_ratio(text);
    if (v.size() != 3) throw UsageError("--split needs three fractions train:val:test");
    return {v[0], v[1], v[2]};
}

std::string csv_row(const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
    return s + "\n";
}

std::string curvature_column(const std::string& name) {
    return name.size() >= 5 && name.compare(name.size() - 5, 5, "c_out") == 0 ? name : "c_" + name;
}

const std::vector<graph::Index>& split_part(const graph::Split& s, const std::string& part) {
    if (part == "train") return s.train;
    if (part == "val") return s.val;
    if (part == "test") return s.test;
    throw UsageError("--part must be train, val or test");
}

void ensure_split(graph::HeteroGraph& g, const std::array<double, 3>& fractions, std::uint64_t seed,
                  std::ostream& log) {
    if (g.split) return;
    std::vector<std::string> warnings;
    g.split = graph::make_split(g, fractions, seed, &warnings);
    for (const auto& w : warnings) log << "warning: " << w << "\n";
}

json split_json(const std::array<double, 3>& s) { return json::array({s[0], s[1], s[2]}); }

std::array<double, 3> split_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw ValidationError("manifest: split must hold three fractions");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

double peak_rss_mb() {
    rusage u{};
    getrusage(RUSAGE_SELF, &u);
    return static_cast<double>(u.ru_maxrss) / 1024.0;  // ru_maxrss is KiB on Linux
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

// --- config -------------------------------------------------------------------

json config_to_json(const model::ModelConfig& c) {
    return {
        {"lambda", c.lambda},
        {"dim", c.dim},
        {"epochs", c.epochs},
        {"seed", c.seed},
        {"select_best", c.select_best},
        {"reduction", c.reduction == model::LossReduction::Sum ? "sum" : "mean"},
        {"batch_size", c.batch_size},
        {"transformer",
         {{"heads", c.transformer.heads},
          {"layers", c.transformer.layers},
          {"dropout", c.transformer.dropout},
          {"alpha", c.transformer.alpha},
          {"bn_momentum", c.transformer.bn_momentum},
          {"bn_var_floor", c.transformer.bn_var_floor}}},
        {"gnn", {{"heads", c.gnn.heads}, {"layers", c.gnn.layers}, {"slope", c.gnn.slope}}},
        {"optim",
         {{"lr", c.optim.lr},
          {"weight_decay", c.optim.weight_decay},
          {"beta1", c.optim.beta1},
          {"beta2", c.optim.beta2},
          {"eps", c.optim.eps}}},
    };
}

model::ModelConfig config_from_json(const json& j, model::ModelConfig c) {
    reject_unknown(j, {"lambda", "dim", "epochs", "seed", "select_best", "reduction", "batch_size", "transformer",
                       "gnn", "optim"},
                   "");
    if (j.contains("lambda")) c.lambda = field<double>(j, "lambda", "");
    if (j.contains("dim")) c.dim = field<std::size_t>(j, "dim", "");
    if (j.contains("epochs")) c.epochs = field<std::size_t>(j, "epochs", "");
    if (j.contains("seed")) c.seed = field<std::uint64_t>(j, "seed", "");
    if (j.contains("select_best")) c.select_best = field<bool>(j, "select_best", "");
    if (j.contains("batch_size")) c.batch_size = field<std::size_t>(j, "batch_size", "");
    if (j.contains("reduction")) {
        const auto r = field<std::string>(j, "reduction", "");
        if (r != "sum" && r != "mean") throw UsageError("reduction must be \"sum\" or \"mean\"");
        c.reduction = r == "sum" ? model::LossReduction::Sum : model::LossReduction::Mean;
    }
    if (j.contains("transformer")) {
        const json& t = j["transformer"];
        reject_unknown(t, {"heads", "layers", "dropout", "alpha", "bn_momentum", "bn_var_floor"}, "transformer.");
        if (t.contains("heads")) c.transformer.heads = field<std::size_t>(t, "heads", "transformer.");
        if (t.contains("layers")) c.transformer.layers = field<std::size_t>(t, "layers", "transformer.");
        if (t.contains("dropout")) c.transformer.dropout = field<double>(t, "dropout", "transformer.");
        if (t.contains("alpha")) c.transformer.alpha = field<double>(t, "alpha", "transformer.");
        if (t.contains("bn_momentum")) c.transformer.bn_momentum = field<double>(t, "bn_momentum", "transformer.");
        if (t.contains("bn_var_floor")) c.transformer.bn_var_floor = field<double>(t, "bn_var_floor", "transformer.");
    }
    if (j.contains("gnn")) {
        const json& t = j["gnn"];
        reject_unknown(t, {"heads", "layers", "slope"}, "gnn.");
        if (t.contains("heads")) c.gnn.heads = field<std::size_t>(t, "heads", "gnn.");
        if (t.contains("layers")) c.gnn.layers = field<std::size_t>(t, "layers", "gnn.");
        if (t.contains("slope")) c.gnn.slope = field<double>(t, "slope", "gnn.");
    }
    if (j.contains("optim")) {
        const json& t = j["optim"];
        reject_unknown(t, {"lr", "weight_decay", "beta1", "beta2", "eps"}, "optim.");
        if (t.contains("lr")) c.optim.lr = field<double>(t, "lr", "optim.");
        if (t.contains("weight_decay")) c.optim.weight_decay = field<double>(t, "weight_decay", "optim.");
        if (t.contains("beta1")) c.optim.beta1 = field<double>(t, "beta1", "optim.");
        if (t.contains("beta2")) c.optim.beta2 = field<double>(t, "beta2", "optim.");
        if (t.contains("eps")) c.optim.eps = field<double>(t, "eps", "optim.");
    }
    c.transformer.dim = c.dim;
    c.gnn.dim = c.dim;
    return c;
}

std::vector<double> parse_ratio(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ':')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(part, &used));
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw UsageError("cannot parse '" + text + "' as colon-separated numbers");
        }
    }
    if (out.empty()) throw UsageError("empty ratio");
    for (double v : out)
        if (!std::isfinite(v) || v < 0.0) throw UsageError("ratio entries must be finite and non-negative: " + text);
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(part, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != part.size() || v == 0) throw UsageError("cannot parse sizes '" + text + "'");
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw UsageError("--sizes needs at least one size");
    return out;
}

// --- checkpoints ----------------------------------------------------------------

void save_checkpoint(const std::string& path, const model::HypHGT& m, std::size_t epoch) {
    json params = json::object();
    for (const auto& p : m.params().entries()) {
        auto v = p.tensor.data();
        params[p.name] = {{"shape", p.tensor.shape()}, {"data", std::vector<double>(v.begin(), v.end())}};
    }
    write_json(path, {{"format", kCheckpointFormat}, {"version", 1}, {"epoch", epoch}, {"params", params}});
}

void load_checkpoint(const std::string& path, model::HypHGT& m) {
    const json j = read_json(path);
    if (j.value("format", "") != kCheckpointFormat || j.value("version", 0) != 1)
        throw ValidationError(path + ": not a version 1 checkpoint");
    const json& params = j.at("params");
    ad::ParameterStore::Snapshot snap;
    for (const auto& p : m.params().entries()) {
        if (!params.contains(p.name)) throw ValidationError(path + ": missing parameter " + p.name);
        const auto& e = params[p.name];
        if (e.at("shape").get<ad::Shape>() != p.tensor.shape())
            throw ValidationError(path + ": shape mismatch for " + p.name);
        snap[p.name] = e.at("data").get<std::vector<double>>();
        if (snap[p.name].size() != p.tensor.numel()) throw ValidationError(path + ": size mismatch for " + p.name);
    }
    if (params.size() != snap.size()) throw ValidationError(path + ": checkpoint has parameters the model lacks");
    m.params().restore(snap);
}

// --- generate -------------------------------------------------------------------

graph::HeteroGraph cmd_generate(const GenerateOptions& opts, std::ostream& log) {
    if (opts.ba.m == 0) throw UsageError("--m must be at least 1");
    if (opts.ba.nodes <= opts.ba.m) throw UsageError("--nodes must exceed --m");
    if (opts.out.empty()) throw UsageError("--out is required");
    auto g = graph::generate_ba_hetero(opts.ba);
    ensure_split(g, opts.split, opts.ba.seed, log);
    graph::save_graph(g, opts.out);
    json ba = {{"nodes", opts.ba.nodes},
               {"m", opts.ba.m},
               {"ratio", opts.ba.ratio},
               {"seed", opts.ba.seed},
               {"feature_dim", opts.ba.feature_dim},
               {"num_classes", opts.ba.num_classes},
               {"class_separation", opts.ba.class_separation}};
    write_json(fs::path(opts.out) / "manifest.json", {{"format", kRunFormat},
                                                      {"version", 1},
                                                      {"command", "generate"},
                                                      {"git_describe", git_describe()},
                                                      {"seed", opts.ba.seed},
                                                      {"generator", ba},
                                                      {"split", split_json(opts.split)},
                                                      {"out", opts.out}});
    log << "generated " << g.total_nodes() << " nodes, " << g.total_edges() << " edges:";
    for (const auto& t : g.node_types) log << " " << t.name << "=" << t.count;
    for (const auto& r : g.relations) log << " " << r.name << "=" << r.num_edges();
    log << "\n";
    return g;
}

// --- train / eval ------------------------------------------------------------------

json report_to_json(const model::EvalReport& r) {
    return {{"count", r.count},         {"accuracy", r.accuracy}, {"macro_f1", r.macro_f1},
            {"micro_f1", r.micro_f1},   {"precision", r.precision}, {"recall", r.recall},
            {"f1", r.f1},               {"confusion", r.confusion}};
}

TrainResult cmd_train(const TrainOptions& opts, std::ostream& log) {
    if (opts.graph_dir.empty()) throw UsageError("--graph is required");
    make_dir(opts.out);
    auto g = graph::load_graph(opts.graph_dir);
    if (!g.has_labels()) throw UsageError("graph has no labels; train needs a labeled target type");
    const model::ModelConfig& cfg = opts.config;
    ensure_split(g, opts.split, cfg.seed, log);
    model::HypHGT m(g, cfg);

    const fs::path out(opts.out);
    write_json(out / "manifest.json", {{"format", kRunFormat},
                                       {"version", 1},
                                       {"command", "train"},
                                       {"git_describe", git_describe()},
                                       {"seed", cfg.seed},
                                       {"graph", absolute(opts.graph_dir)},
                                       {"split", split_json(opts.split)},
                                       {"out", opts.out},
                                       {"config", config_to_json(cfg)}});

    const auto names = m.curvature_names();
    std::ofstream log_csv(out / "log.csv", std::ios::binary), curv_csv(out / "curvature.csv", std::ios::binary);
    if (!log_csv || !curv_csv) throw IoError("cannot write logs under " + opts.out);
    std::vector<std::string> head{"epoch", "train_loss", "val_loss", "train_accuracy", "val_macro_f1", "val_micro_f1"};
    std::vector<std::string> chead{"epoch"};
    for (const auto& n : names) {
        head.push_back(curvature_column(n));
        chead.push_back(n);
    }
    log_csv << csv_row(head);
    curv_csv << csv_row(chead);

    log << "training " << m.params().trainable_scalar_count() << " parameters on " << g.split->train.size()
        << " nodes for " << cfg.epochs << " epochs\n";
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult res;
    res.state = model::train(m, g, [&](const model::EpochLog& row) {
        std::vector<std::string> cells{std::to_string(row.epoch),       format_double(row.train_loss),
                                       format_double(row.val_loss),     format_double(row.train_accuracy),
                                       format_double(row.val_macro_f1), format_double(row.val_micro_f1)};
        std::vector<std::string> ccells{std::to_string(row.epoch)};
        for (double c : row.curvatures) {
            cells.push_back(format_double(c));
            ccells.push_back(format_double(c));
        }
        log_csv << csv_row(cells);
        curv_csv << csv_row(ccells);
        if (opts.log_every && (row.epoch % opts.log_every == 0 || row.epoch + 1 == cfg.epochs)) {
            log << "epoch " << row.epoch << " train_loss " << row.train_loss << " val_loss " << row.val_loss
                << " train_acc " << row.train_accuracy << " val_micro_f1 " << row.val_micro_f1 << "\n";
        }
    });
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_csv.close();
    curv_csv.close();

    json report = {{"epochs", cfg.epochs},
                   {"best_epoch", res.state.best_epoch},
                   {"best_val_loss", res.state.best_val_loss},
                   {"seconds", res.seconds}};
    const std::pair<const char*, model::EvalReport*> parts[] = {
        {"train", &res.train}, {"val", &res.val}, {"test", &res.test}};
    for (const auto& [name, dst] : parts) {
        const auto& nodes = split_part(*g.split, name);
        if (nodes.empty()) {
            report[name] = nullptr;
            continue;
        }
        *dst = model::evaluate(m, g, nodes);
        report[name] = report_to_json(*dst);
    }
    json curv = json::array();
    const auto final_values = m.curvature_values();
    for (std::size_t i = 0; i < names.size(); ++i)
        curv.push_back({{"name", names[i]},
                        {"initial", res.state.initial_curvatures[i]},
                        {"final", final_values[i]}});
    report["curvatures"] = curv;
    write_json(out / "report.json", report);
    save_checkpoint((out / "checkpoint.json").string(), m, res.state.best_epoch);
    log << "best epoch " << res.state.best_epoch << "; test micro-F1 " << res.test.micro_f1 << " macro-F1 "
        << res.test.macro_f1 << "\n";
    return res;
}

model::EvalReport cmd_eval(const EvalOptions& opts, std::ostream& log) {
    if (opts.run_dir.empty()) throw UsageError("--run is required");
    const fs::path run(opts.run_dir);
    const json manifest = read_json(run / "manifest.json");
    if (manifest.value("format", "") != kRunFormat || manifest.value("command", "") != "train")
        throw ValidationError((run / "manifest.json").string() + ": not a train manifest");
    const auto cfg = config_from_json(manifest.at("config"));
    const std::string graph_dir = opts.graph_dir.empty() ? manifest.at("graph").get<std::string>() : opts.graph_dir;
    auto g = graph::load_graph(graph_dir);
    if (!g.has_labels()) throw UsageError("graph has no labels to evaluate against");
    ensure_split(g, split_from_json(manifest.at("split")), cfg.seed, log);
    model::HypHGT m(g, cfg);
    load_checkpoint((run / "checkpoint.json").string(), m);
    const auto& nodes = split_part(*g.split, opts.part);
    if (nodes.empty()) throw UsageError("split part '" + opts.part + "' is empty");
    auto report = model::evaluate(m, g, nodes);
    json j = report_to_json(report);
    j["part"] = opts.part;
    if (!opts.out.empty()) write_json(opts.out, j);
    log << j.dump(2) << "\n";
    return report;
}

// --- bench ---------------------------------------------------------------------------

std::optional<double> fit_time_exponent(const std::vector<BenchRow>& rows) {
    std::vector<double> x, y;
    for (const auto& r : rows) {
        if (r.status != "ok" || !(r.epoch_seconds > 0.0)) continue;
        x.push_back(std::log(static_cast<double>(r.nodes)));
        y.push_back(std::log(r.epoch_seconds));
    }
    if (x.size() < 2) return std::nullopt;
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0) return std::nullopt;
    return sxy / sxx;
}

namespace {

BenchRow bench_in_process(std::size_t nodes, const BenchOptions& opts) {
    graph::BaConfig ba = opts.ba;
    ba.nodes = nodes;
    ba.general_ratio = ba.ratio.size() != 3;
    auto g = graph::generate_ba_hetero(ba);
    g.split = graph::make_split(g, {0.6, 0.2, 0.2}, ba.seed);
    model::ModelConfig cfg = opts.config;
    cfg.epochs = opts.warmup + opts.repeats;
    cfg.select_best = false;
    model::HypHGT m(g, cfg);
    BenchRow row;
    row.nodes = nodes;
    row.edges = g.total_edges();
    std::vector<double> times;
    auto last = std::chrono::steady_clock::now();
    model::train(m, g, [&](const model::EpochLog&) {
        const auto now = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double>(now - last).count());
        row.peak_rss_mb = std::max(row.peak_rss_mb, peak_rss_mb());
        last = now;
    });
    row.epoch_seconds = median(std::vector<double>(times.begin() + static_cast<long>(opts.warmup), times.end()));
    return row;
}

// Child protocol: one line "ok <edges> <seconds> <rss>" or "fail <message>".
BenchRow bench_isolated(std::size_t nodes, const BenchOptions& opts) {
    int fds[2];
    if (pipe(fds) != 0) throw IoError(std::string("pipe: ") + std::strerror(errno));
    std::cout.flush();
    std::cerr.flush();
    const pid_t pid = fork();
    if (pid < 0) throw IoError(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        close(fds[0]);
        std::string msg;
        try {
            if (opts.memory_limit_mb > 0) {
                rlimit lim{};
                lim.rlim_cur = lim.rlim_max = static_cast<rlim_t>(opts.memory_limit_mb) << 20;
                setrlimit(RLIMIT_AS, &lim);
            }
            const BenchRow r = bench_in_process(nodes, opts);
            msg = "ok " + std::to_string(r.edges) + " " + format_double(r.epoch_seconds) + " " +
                  format_double(r.peak_rss_mb) + "\n";
        } catch (const std::bad_alloc&) {
            msg = "fail out of memory\n";
        } catch (const std::exception& e) {
            msg = std::string("fail ") + e.what() + "\n";
        }
        const char* p = msg.data();
        std::size_t left = msg.size();
        while (left > 0) {
            const ssize_t n = write(fds[1], p, left);
            if (n <= 0) break;
            p += n;
            left -= static_cast<std::size_t>(n);
        }
        close(fds[1]);
        _exit(0);
    }
    close(fds[1]);
    std::string msg;
    char buf[512];
    ssize_t n = 0;
    while ((n = read(fds[0], buf, sizeof buf)) > 0) msg.append(buf, static_cast<std::size_t>(n));
    close(fds[0]);
    int status = 0;
    rusage usage{};
    wait4(pid, &status, 0, &usage);

    BenchRow row;
    row.nodes = nodes;
    row.peak_rss_mb = static_cast<double>(usage.ru_maxrss) / 1024.0;
    std::istringstream in(msg);
    std::string tag;
    in >> tag;
    if (tag == "ok") {
        in >> row.edges >> row.epoch_seconds >> row.peak_rss_mb;
        row.status = "ok";
    } else if (tag == "fail") {
        std::string rest;
        std::getline(in, rest);
        row.status = "failed:" + rest;
    } else if (WIFSIGNALED(status)) {
        row.status = "failed: killed by signal " + std::to_string(WTERMSIG(status));
    } else {
        row.status = "failed: no result from worker";
    }
    for (auto& ch : row.status)
        if (ch == ',' || ch == '\n') ch = ';';
    return row;
}

}  // namespace

BenchResult cmd_bench(const BenchOptions& opts, std::ostream& log) {
    if (opts.sizes.empty()) throw UsageError("--sizes needs at least one size");
    if (!std::is_sorted(opts.sizes.begin(), opts.sizes.end())) throw UsageError("--sizes must be ascending");
    if (opts.repeats == 0) throw UsageError("--repeats must be at least 1");
    for (auto n : opts.sizes)
        if (n <= opts.ba.m) throw UsageError("every size must exceed --m");
    opts.config.validate();

    BenchResult res;
    std::ofstream csv;
    if (!opts.out.empty()) {
        make_dir(opts.out);
        json ba = {{"m", opts.ba.m}, {"ratio", opts.ba.ratio}, {"seed", opts.ba.seed},
                   {"feature_dim", opts.ba.feature_dim}, {"num_classes", opts.ba.num_classes}};
        write_json(fs::path(opts.out) / "manifest.json", {{"format", kRunFormat},
                                                          {"version", 1},
                                                          {"command", "bench"},
                                                          {"git_describe", git_describe()},
                                                          {"seed", opts.ba.seed},
                                                          {"sizes", opts.sizes},
                                                          {"warmup", opts.warmup},
                                                          {"repeats", opts.repeats},
                                                          {"generator", ba},
                                                          {"out", opts.out},
                                                          {"config", config_to_json(opts.config)}});
        csv.open(fs::path(opts.out) / "bench.csv", std::ios::binary);
        if (!csv) throw IoError("cannot write bench.csv");
        csv << "nodes,edges,epoch_seconds,peak_rss_mb,status\n";
    }
    log << "nodes,edges,epoch_seconds,peak_rss_mb,status\n";
    for (auto n : opts.sizes) {
        BenchRow row = bench_isolated(n, opts);
        const std::string line = csv_row({std::to_string(row.nodes), std::to_string(row.edges),
                                          format_double(row.epoch_seconds), format_double(row.peak_rss_mb),
                                          row.status});
        log << line << std::flush;
        if (csv) csv << line << std::flush;
        res.rows.push_back(row);
    }
    res.exponent = fit_time_exponent(res.rows);
    log << "time exponent: " << (res.exponent ? format_double(*res.exponent) : std::string("n/a")) << "\n";
    if (!opts.out.empty()) {
        write_json(fs::path(opts.out) / "fit.json",
                   {{"time_exponent", res.exponent ? json(*res.exponent) : json("n/a")}});
    }
    return res;
}

// --- gradcheck -----------------------------------------------------------------

namespace {

// Identity forward, backward passes on half the gradient.
Tensor faulty_identity(const Tensor& x) {
    auto v = x.data();
    return ad::custom_op("faulty_identity", x.shape(), std::vector<double>(v.begin(), v.end()), {x},
                         [](ad::Node& o) {
                             auto& g = o.inputs[0]->grad_buffer();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += 0.5 * o.grad[i];
                         });
}

}  // namespace

GradcheckResult cmd_gradcheck(const GradcheckOptions& opts, std::ostream& log) {
    if (!(opts.eps > 0.0) || !(opts.tolerance > 0.0)) throw UsageError("--eps and --tolerance must be positive");
    auto g = graph::toy_graph(opts.seed);
    model::ModelConfig cfg;
    cfg.lambda = opts.lambda;
    cfg.dim = opts.dim;
    cfg.seed = opts.seed;
    cfg.transformer.dim = opts.dim;
    cfg.transformer.heads = opts.heads;
    cfg.transformer.layers = opts.layers;
    cfg.transformer.dropout = 0.0;
    cfg.transformer.alpha = opts.alpha;
    cfg.gnn.dim = opts.dim;
    cfg.gnn.heads = opts.gnn_heads;
    cfg.gnn.layers = opts.gnn_layers;
    try {
        cfg.validate();
    } catch (const ContractError& e) {
        throw UsageError(e.what());
    }
    if (!(opts.perturb >= 0.0)) throw UsageError("--perturb must be non-negative");
    model::HypHGT m(g, cfg);
    std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> noise(-opts.perturb, opts.perturb);
    for (auto p : m.params().trainable())
        for (double& v : p.tensor.mutable_data()) v += noise(rng);
    auto loss = [&] {
        nn::ForwardContext ctx;
        ctx.training = true;
        ctx.update_running_stats = false;
        Tensor probs = m.forward(ctx).probs;
        if (opts.inject_backward_fault) probs = faulty_identity(probs);
        return model::cross_entropy(probs, g.labels, g.split->train, cfg.reduction);
    };
    GradcheckResult res;
    res.nodes = g.total_nodes();
    res.report = ad::finite_diff_check(loss, m.params().trainable(), opts.eps);
    res.passed = res.report.max_rel_error <= opts.tolerance;

    log << "gradcheck on " << res.nodes << " nodes, " << g.relations.size() << " relations, eps "
        << format_double(opts.eps) << (opts.inject_backward_fault ? " (backward fault injected)" : "") << "\n";
    json groups = json::array();
    for (const auto& grp : res.report.groups) {
        log << "  " << grp.name << " [" << grp.size << "] max_rel_error " << format_double(grp.max_rel_error)
            << (std::abs(grp.numeric) < 1e-8 && std::abs(grp.analytic) < 1e-8 ? "  (flat at worst entry)" : "")
            << "\n";
        groups.push_back({{"name", grp.name},
                          {"size", grp.size},
                          {"max_rel_error", grp.max_rel_error},
                          {"worst_index", grp.worst_index},
                          {"analytic", grp.analytic},
                          {"numeric", grp.numeric}});
    }
    log << (res.passed ? "PASS" : "FAIL") << " max_rel_error " << format_double(res.report.max_rel_error)
        << " tolerance " << format_double(opts.tolerance) << "\n";
    if (!opts.out.empty()) {
        make_dir(opts.out);
        write_json(fs::path(opts.out) / "report.json", {{"passed", res.passed},
                                                        {"max_rel_error", res.report.max_rel_error},
                                                        {"tolerance", opts.tolerance},
                                                        {"eps", opts.eps},
                                                        {"nodes", res.nodes},
                                                        {"groups", groups}});
        write_json(fs::path(opts.out) / "manifest.json", {{"format", kRunFormat},
                                                          {"version", 1},
                                                          {"command", "gradcheck"},
                                                          {"git_describe", git_describe()},
                                                          {"seed", opts.seed},
                                                          {"out", opts.out},
                                                          {"config", config_to_json(cfg)}});
    }
    return res;
}

// --- argv ----------------------------------------------------------------------

namespace {

// Model flags shared by train and bench; explicitly given flags override the
// config file, which overrides the defaults.
struct ModelFlags {
    std::string config_path;
    double lambda = 0, dropout = 0, lr = 0, weight_decay = 0;
    std::size_t dim = 0, heads = 0, gnn_heads = 0, layers = 0, gnn_layers = 0, epochs = 0, batch_size = 0;
    std::uint64_t seed = 0;
    std::string reduction;
    std::vector<std::pair<CLI::Option*, std::function<void(model::ModelConfig&)>>> setters;
    json manifest;  // the run manifest when --config names one

    void add(CLI::App* app) {
        app->add_option("--config", config_path, "JSON config, or a run manifest to reproduce");
        auto opt = [&](const char* name, auto& var, const char* help, auto apply) {
            setters.emplace_back(app->add_option(name, var, help), apply);
        };
        opt("--lambda", lambda, "weight of the transformer branch in [0, 1]",
            [this](model::ModelConfig& c) { c.lambda = lambda; });
        opt("--dim", dim, "embedding width of both branches", [this](model::ModelConfig& c) { c.dim = dim; });
        opt("--heads", heads, "transformer heads", [this](model::ModelConfig& c) { c.transformer.heads = heads; });
        opt("--gnn-heads", gnn_heads, "GNN heads", [this](model::ModelConfig& c) { c.gnn.heads = gnn_heads; });
        opt("--layers", layers, "transformer layers",
            [this](model::ModelConfig& c) { c.transformer.layers = layers; });
        opt("--gnn-layers", gnn_layers, "GNN layers", [this](model::ModelConfig& c) { c.gnn.layers = gnn_layers; });
        opt("--epochs", epochs, "training epochs", [this](model::ModelConfig& c) { c.epochs = epochs; });
        opt("--seed", seed, "initialisation / dropout seed", [this](model::ModelConfig& c) { c.seed = seed; });
        opt("--dropout", dropout, "transformer dropout rate",
            [this](model::ModelConfig& c) { c.transformer.dropout = dropout; });
        opt("--lr", lr, "AdamW learning rate", [this](model::ModelConfig& c) { c.optim.lr = lr; });
        opt("--weight-decay", weight_decay, "AdamW decoupled weight decay",
            [this](model::ModelConfig& c) { c.optim.weight_decay = weight_decay; });
        opt("--batch-size", batch_size, "training nodes per step (0 = full batch)",
            [this](model::ModelConfig& c) { c.batch_size = batch_size; });
        opt("--reduction", reduction, "cross-entropy reduction: sum or mean", [this](model::ModelConfig& c) {
            if (reduction != "sum" && reduction != "mean") throw UsageError("--reduction must be sum or mean");
            c.reduction = reduction == "sum" ? model::LossReduction::Sum : model::LossReduction::Mean;
        });
    }

    model::ModelConfig resolve() {
        model::ModelConfig c;
        if (!config_path.empty()) {
            json j = read_json(config_path);
            if (j.is_object() && j.value("format", "") == kRunFormat) {
                manifest = j;
                if (!j.contains("config")) throw UsageError(config_path + ": manifest has no config");
                j = j["config"];
            }
            c = config_from_json(j, c);
        }
        for (auto& [o, apply] : setters)
            if (o->count() > 0) apply(c);
        c.transformer.dim = c.dim;
        c.gnn.dim = c.dim;
        try {
            c.validate();
        } catch (const ContractError& e) {
            throw UsageError(std::string("invalid config: ") + e.what());
        }
        return c;
    }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hyperbolic heterogeneous graph transformer: data generation, training, evaluation, "
                 "benchmarking and gradient checks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", git_describe());

    GenerateOptions gen;
    std::string gen_ratio = "6:3:1", gen_split = "0.6:0.2:0.2";
    auto* g = app.add_subcommand("generate", "generate a typed Barabasi-Albert graph");
    g->add_option("--nodes", gen.ba.nodes, "number of nodes")->capture_default_str();
    g->add_option("--m", gen.ba.m, "edges per new node")->capture_default_str();
    g->add_option("--ratio", gen_ratio, "node type ratio, e.g. 6:3:1")->capture_default_str();
    g->add_option("--seed", gen.ba.seed, "generator and split seed")->capture_default_str();
    g->add_option("--feature-dim", gen.ba.feature_dim, "feature width per node")->capture_default_str();
    g->add_option("--classes", gen.ba.num_classes, "degree-quantile classes")->capture_default_str();
    g->add_option("--separation", gen.ba.class_separation, "class mean separation")->capture_default_str();
    g->add_option("--split", gen_split, "train:val:test fractions")->capture_default_str();
    g->add_option("--out", gen.out, "output graph directory")->required();

    TrainOptions tr;
    ModelFlags tr_flags;
    std::string tr_split = "0.6:0.2:0.2";
    auto* t = app.add_subcommand("train", "train on a graph directory");
    t->add_option("--graph", tr.graph_dir, "graph directory (default: the one in a --config manifest)");
    t->add_option("--out", tr.out, "run directory")->required();
    t->add_option("--split", tr_split, "train:val:test fractions when the graph has no split");
    t->add_option("--log-every", tr.log_every, "progress line every N epochs (0 = quiet)");
    tr_flags.add(t);

    EvalOptions ev;
    auto* e = app.add_subcommand("eval", "evaluate a trained run");
    e->add_option("--run", ev.run_dir, "run directory written by train")->required();
    e->add_option("--graph", ev.graph_dir, "graph directory (default: the one recorded in the run)");
    e->add_option("--part", ev.part, "split part: train, val or test")->capture_default_str();
    e->add_option("--out", ev.out, "write the report JSON here");

    BenchOptions be;
    ModelFlags be_flags;
    std::string be_sizes = "10000,20000,40000,80000", be_ratio = "6:3:1";
    std::uint64_t be_graph_seed = 0;
    auto* b = app.add_subcommand("bench", "time one training epoch over increasing graph sizes");
    b->add_option("--sizes", be_sizes, "ascending node counts, comma separated")->capture_default_str();
    b->add_option("--m", be.ba.m, "edges per new node")->capture_default_str();
    b->add_option("--ratio", be_ratio, "node type ratio")->capture_default_str();
    b->add_option("--graph-seed", be_graph_seed, "generator seed")->capture_default_str();
    b->add_option("--warmup", be.warmup, "untimed epochs per size")->capture_default_str();
    b->add_option("--repeats", be.repeats, "timed epochs per size (median reported)")->capture_default_str();
    b->add_option("--memory-limit-mb", be.memory_limit_mb, "address-space cap per size, 0 = none");
    b->add_option("--out", be.out, "output directory for bench.csv");
    be_flags.add(b);

    GradcheckOptions gc;
    auto* c = app.add_subcommand("gradcheck", "finite-difference check of every parameter group on a toy graph");
    c->add_option("--dim", gc.dim, "embedding width")->capture_default_str();
    c->add_option("--heads", gc.heads, "transformer heads")->capture_default_str();
    c->add_option("--gnn-heads", gc.gnn_heads, "GNN heads")->capture_default_str();
    c->add_option("--layers", gc.layers, "transformer layers")->capture_default_str();
    c->add_option("--gnn-layers", gc.gnn_layers, "GNN layers")->capture_default_str();
    c->add_option("--lambda", gc.lambda, "branch weight")->capture_default_str();
    c->add_option("--alpha", gc.alpha, "kernel offset of the linear attention")->capture_default_str();
    c->add_option("--perturb", gc.perturb, "noise added to the initial parameters")->capture_default_str();
    c->add_option("--eps", gc.eps, "central difference step")->capture_default_str();
    c->add_option("--tolerance", gc.tolerance, "pass threshold on the relative error")->capture_default_str();
    c->add_option("--seed", gc.seed, "initialisation seed")->capture_default_str();
    c->add_flag("--inject-backward-fault", gc.inject_backward_fault, "corrupt one backward rule (negative control)");
    c->add_option("--out", gc.out, "write report.json and manifest.json here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& pe) {
        const int code = app.exit(pe, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*g) {
            gen.ba.ratio = parse_ratio(gen_ratio);
            gen.ba.general_ratio = gen.ba.ratio.size() != 3;
            gen.split = parse_split(gen_split);
            cmd_generate(gen, out);
        } else if (*t) {
            tr.config = tr_flags.resolve();
            const auto& mf = tr_flags.manifest;
            if (tr.graph_dir.empty() && mf.contains("graph")) tr.graph_dir = mf["graph"].get<std::string>();
            if (t->get_option("--split")->count() > 0) tr.split = parse_split(tr_split);
            else if (mf.contains("split")) tr.split = split_from_json(mf["split"]);
            cmd_train(tr, out);
        } else if (*e) {
            cmd_eval(ev, out);
        } else if (*b) {
            be.sizes = parse_sizes(be_sizes);
            be.ba.ratio = parse_ratio(be_ratio);
            be.ba.seed = be_graph_seed;
            be.config = be_flags.resolve();
            cmd_bench(be, out);
        } else if (*c) {
            if (!cmd_gradcheck(gc, out).passed) return kNumeric;
        }
    } catch (const UsageError& ex) {
        err << "usage error: " << ex.what() << "\n";
        return kUsage;
    } catch (const ContractError& ex) {
        err << "usage error: " << ex.what() << "\n";
        return kUsage;
    } catch (const NumericError& ex) {
        err << "numeric failure: " << ex.what() << "\n";
        return kNumeric;
    } catch (const DomainError& ex) {
        err << "numeric failure: " << ex.what() << "\n";
        return kNumeric;
    } catch (const std::bad_alloc&) {
        err << "numeric failure: out of memory\n";
        return kNumeric;
    } catch (const std::exception& ex) {
        // ValidationError, IoError, ShapeError and anything unforeseen
        err << "error: " << ex.what() << "\n";
        return kValidation;
    }
    return kOk;
}

}  // namespace hyphgt::cli
