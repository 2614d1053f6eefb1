#pragma once

// Experiment driver behind the `taskbank` command: layered configuration,
// per-seed build and baseline runs, re-evaluation and report aggregation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskbank/grouping.hpp"
#include "taskbank/metrics.hpp"

namespace taskbank::cli {

namespace fs = std::filesystem;

inline constexpr int kSchema = 1;

// Exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
// Exit code 3.
class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  fs::path tasks_path;
  fs::path out_dir;
  std::string method = "bg";  // fp | ar | ts | kt | pr | bg
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  // "auto", "auto:loose", "auto:tight", a number, "inf" or "-inf". Numbers are
  // in scorer units: distance for bg/pr, Mbps of G_min for kt.
  std::string threshold = "auto";
  grouping::GroupingConfig grouping;
  bool curves = true;
};

// Defaults as a nested document; every settable key appears here.
nlohmann::json default_config_json();
// Desk-scale overrides: shorter ticks per step, shorter warm-up, 20 000-step PPO.
void apply_desk_preset(nlohmann::json& doc);
// Sets `dotted.key` to `value`. Unknown keys raise ConfigError.
void set_dotted(nlohmann::json& doc, const std::string& key, const nlohmann::json& value);
// Merges a config file, nested or flat dotted.
void merge_config_file(nlohmann::json& doc, const fs::path& file);
// "key=value"; the value is parsed as JSON when possible, else taken as a string.
void apply_assignment(nlohmann::json& doc, const std::string& assignment);
ExperimentConfig config_from_json(const nlohmann::json& doc);

std::vector<netsim::TrafficTask> load_tasks(const fs::path& file);
fs::path default_out_root();

// Run directories: <out>/<label>/seed_<s>.
std::string run_label(const ExperimentConfig& cfg);
fs::path run_dir(const ExperimentConfig& cfg, std::uint64_t seed);

// Grouping config for one seed of a learning method, before threshold
// resolution.
grouping::GroupingConfig seed_config(const ExperimentConfig& cfg,
                                     std::size_t n_tasks, std::uint64_t seed);

struct SeedRun {
  metrics::EvalResult result;
  fs::path dir;
  std::optional<compat::Thresholds> calibrated;
};

// One seed of a learning method. Writes checkpoint files, result.csv,
// per_task.csv and curves.csv into the run directory.
SeedRun build_seed(const ExperimentConfig& cfg,
                   const std::vector<netsim::TrafficTask>& tasks,
                   std::uint64_t seed, const grouping::TrainFn& train = {},
                   bool resume = false);
// One seed of fp or ar.
SeedRun baseline_seed(const ExperimentConfig& cfg,
                      const std::vector<netsim::TrafficTask>& tasks,
                      std::uint64_t seed);

// Re-evaluates a finished run directory with a fresh rho seed.
metrics::EvalResult eval_run(const fs::path& dir,
                             const std::vector<netsim::TrafficTask>& tasks,
                             std::uint64_t seed, int eval_steps, int jobs = 1);

// Per-step trace of one deterministic rollout:
// step,reward,active_0..,util_0..,thr_0..
void write_trace(const fs::path& file, const rl::Controller& controller,
                 const netsim::TrafficTask& task, const netsim::SimConfig& sim,
                 int steps, std::uint64_t seed);

void write_result(const fs::path& dir, const metrics::EvalResult& r,
                  const std::string& config_hash);

struct CurvePoint {
  int tasks_processed = 0;
  int num_trained = 0;
  double rho = 0.0;
};
std::vector<CurvePoint> curve_from_log(const std::vector<grouping::IterationLog>& log);
void write_curves(const fs::path& file, const std::vector<CurvePoint>& pts,
                  const std::string& config_hash);
std::vector<CurvePoint> read_curves(const fs::path& file);

// Reads `# schema=N ...` from the first line; -1 when absent.
int file_schema(const fs::path& file);

struct ReportSummary {
  std::vector<metrics::EvalResult> runs;
  std::vector<std::string> groups;  // group label per run
  fs::path report_csv, summary_csv, curves_csv;
  std::vector<fs::path> plots;
};
// Aggregates every run directory below `roots` into `out`.
ReportSummary make_report(const std::vector<fs::path>& roots, const fs::path& out);

std::string svg_line_chart(const std::string& title, const std::string& xlabel,
                           const std::string& ylabel,
                           const std::vector<std::string>& names,
                           const std::vector<std::vector<double>>& xs,
                           const std::vector<std::vector<double>>& ys);

}  // namespace taskbank::cli
