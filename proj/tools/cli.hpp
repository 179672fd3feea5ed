#pragma once

// Commands behind the hyphgt executable. Each cmd_* takes fully resolved
// options, writes its artifacts and throws the library error types; run()
// parses argv and maps errors onto exit codes:
//   0 success, 1 usage, 2 validation, 3 numeric failure.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hyphgt/gradcheck.hpp"
#include "hyphgt/graph.hpp"
#include "hyphgt/model.hpp"
#include "json.hpp"

namespace hyphgt::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kValidation = 2, kNumeric = 3 };

class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

std::string git_describe();

// Every field of the config, defaults included.
nlohmann::json config_to_json(const model::ModelConfig& config);
// Overlays the keys present in `j` onto `base`. Unknown keys and wrong types
// are usage errors.
model::ModelConfig config_from_json(const nlohmann::json& j, model::ModelConfig base = {});

// "6:3:1" -> {6, 3, 1}
std::vector<double> parse_ratio(const std::string& text);
// "10000,20000" -> {10000, 20000}
std::vector<std::size_t> parse_sizes(const std::string& text);

void save_checkpoint(const std::string& path, const model::HypHGT& model, std::size_t epoch);
// Values must match the model's parameter names and sizes (ValidationError).
void load_checkpoint(const std::string& path, model::HypHGT& model);

// --- generate -----------------------------------------------------------------

struct GenerateOptions {
    graph::BaConfig ba{};
    std::array<double, 3> split{0.6, 0.2, 0.2};
    std::string out;
};

graph::HeteroGraph cmd_generate(const GenerateOptions& opts, std::ostream& log);

// --- train / eval -------------------------------------------------------------

struct TrainOptions {
    std::string graph_dir;
    std::string out;
    model::ModelConfig config{};
    // used only when the graph ships without a split; seeded by config.seed
    std::array<double, 3> split{0.6, 0.2, 0.2};
    std::size_t log_every = 10;
};

struct TrainResult {
    model::TrainState state;
    model::EvalReport train, val, test;
    double seconds = 0.0;
};

TrainResult cmd_train(const TrainOptions& opts, std::ostream& log);

struct EvalOptions {
    std::string run_dir;
    std::string graph_dir;  // empty: the graph recorded in the run manifest
    std::string part = "test";
    std::string out;  // empty: print only
};

model::EvalReport cmd_eval(const EvalOptions& opts, std::ostream& log);

nlohmann::json report_to_json(const model::EvalReport& r);

// --- bench --------------------------------------------------------------------

struct BenchOptions {
    std::vector<std::size_t> sizes{10000, 20000, 40000, 80000};
    graph::BaConfig ba{};
    model::ModelConfig config{};
    std::size_t warmup = 1;
    std::size_t repeats = 3;
    // Address-space cap per size in MiB (0 = none); exceeding it reports an
    // out-of-memory row instead of risking the host.
    std::size_t memory_limit_mb = 0;
    std::string out;  // directory; empty: no files
};

struct BenchRow {
    std::size_t nodes = 0;
    std::size_t edges = 0;
    double epoch_seconds = 0.0;  // median over the timed epochs
    double peak_rss_mb = 0.0;
    std::string status = "ok";
};

struct BenchResult {
    std::vector<BenchRow> rows;
    std::optional<double> exponent;  // log-log slope of time vs nodes, ok rows only
};

// Each size runs in a child process so the peak-memory reading belongs to
// that size alone and an allocation failure cannot take down the sweep.
BenchResult cmd_bench(const BenchOptions& opts, std::ostream& log);

// Least-squares slope of log(seconds) on log(nodes) over ok rows; nullopt
// with fewer than two distinct sizes.
std::optional<double> fit_time_exponent(const std::vector<BenchRow>& rows);

// --- gradcheck ----------------------------------------------------------------

struct GradcheckOptions {
    // Head width 4: at width 2 whole value blocks of the toy graph sit in the
    // dead half of the kernel relu and leave some curvatures flat.
    std::size_t dim = 8;
    std::size_t heads = 2;
    std::size_t gnn_heads = 2;
    // Two transformer layers so inverse relations reach the target type and
    // every relation curvature gets a non-trivial derivative.
    std::size_t layers = 2;
    std::size_t gnn_layers = 1;
    double lambda = 0.5;
    double alpha = 1e-6;  // kernel offset of the linear attention
    // Uniform noise of this amplitude added to every trainable parameter
    // before the check. Output biases start at zero, and there the relation
    // curvatures cancel out of the forward pass up to terms of order alpha,
    // which would leave their derivatives near zero and the check vacuous.
    double perturb = 0.1;
    double eps = 1e-5;
    double tolerance = 1e-4;
    std::uint64_t seed = 0;
    // Negative control: routes the loss through an op whose backward rule
    // halves the gradient.
    bool inject_backward_fault = false;
    std::string out;
};

struct GradcheckResult {
    ad::GradCheckReport report;
    std::size_t nodes = 0;
    bool passed = false;
};

GradcheckResult cmd_gradcheck(const GradcheckOptions& opts, std::ostream& log);

// --- entry point --------------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hyphgt::cli
