#pragma once

// Sequential task grouping: bootstrap a bank on a first sample of tasks, then
// for each further sample score every task against every policy, attach
// compatible tasks to their closest policy, train policies for the rest and
// distil the bank back down to its size limit.

#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskbank/bank.hpp"
#include "taskbank/compat.hpp"
#include "taskbank/distill.hpp"
#include "taskbank/netsim.hpp"
#include "taskbank/rl.hpp"

namespace taskbank::grouping {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct GroupingConfig {
  std::size_t n = 8;  // bank size limit
  std::size_t k = 8;  // tasks per sample
  compat::ScorerParams scorer;
  double threshold = 0.3;  // distance units; +-inf allowed
  netsim::SimConfig sim;
  rl::PpoConfig ppo;
  distill::DistillConfig distill;
  int eval_steps = 240;
  std::uint64_t master_seed = 0;
  int jobs = 1;

  void validate() const;
};

nlohmann::json to_json(const GroupingConfig& c);
GroupingConfig grouping_config_from_json(const nlohmann::json& j);

// Seeds are pure functions of the master seed and the task id.
std::uint64_t training_seed(std::uint64_t master, const std::string& task_id);
std::uint64_t assess_seed(std::uint64_t master, const std::string& task_id);
std::string policy_id_for(const std::string& task_id);

// Processing order: a seeded shuffle cut into chunks of k.
std::vector<std::vector<std::string>> sampling_plan(
    const std::vector<netsim::TrafficTask>& tasks, std::size_t k,
    std::uint64_t master);

using TrainFn = std::function<rl::TrainResult(const netsim::TrafficTask&,
                                              const GroupingConfig&)>;
// Plain train_policy with the seeds above.
rl::TrainResult train_for_task(const netsim::TrafficTask& task,
                               const GroupingConfig& cfg);

// Memoizes train_for_task on (task, sim, ppo, seeds), in memory and optionally
// on disk. The step count is reported as if training had run, so w accounting
// is unaffected. Thread-safe.
class TrainingCache {
 public:
  explicit TrainingCache(std::filesystem::path dir = {});
  rl::TrainResult operator()(const netsim::TrafficTask& task,
                             const GroupingConfig& cfg);
  TrainFn fn();
  int hits() const { return hits_; }
  int misses() const { return misses_; }

 private:
  std::string key(const netsim::TrafficTask& task, const GroupingConfig& cfg) const;
  std::filesystem::path dir_;
  std::mutex mu_;
  std::map<std::string, rl::TrainResult> mem_;
  int hits_ = 0, misses_ = 0;
};

struct AssessResult {
  std::map<std::string, std::string> grouped;  // task_id -> policy_id
  std::vector<std::string> incompatible;        // in input order
  std::vector<compat::CompatReport> reports;    // one per (policy, task)
};

// Scores every sampled task against every policy. A policy's distance to a
// task is the minimum over its training experiences.
AssessResult assess(const PolicyBank& bank,
                    const std::vector<const netsim::TrafficTask*>& tasks,
                    const compat::Scorer& scorer, double threshold,
                    const GroupingConfig& cfg);

struct IterationLog {
  int iteration = 0;
  int tasks_sampled = 0;
  int num_compatible = 0;
  int num_trained = 0;
  std::size_t bank_size = 0;
  long w_steps = 0;
  double rho = std::numeric_limits<double>::quiet_NaN();
};

struct CompatRow {
  int iteration = 0;
  compat::CompatReport report;
};

struct RunState {
  PolicyBank bank;
  std::vector<std::vector<std::string>> plan;
  std::size_t next_chunk = 0;
  std::vector<IterationLog> log;
  std::vector<CompatRow> compat_rows;
  std::string config_hash;

  bool done() const { return next_chunk >= plan.size(); }
};

struct RunOptions {
  TrainFn train;  // defaults to train_for_task
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  bool resume = false;
  // Optional score recorded in IterationLog::rho after each iteration.
  std::function<double(const PolicyBank&)> progress_metric;
  // Stop after this many iterations (bootstrap counts as one); for tests.
  int max_iterations = -1;
};

std::string config_hash(const GroupingConfig& cfg);

RunState run(const std::vector<netsim::TrafficTask>& tasks,
             const GroupingConfig& cfg, const RunOptions& opts = {});

// Checkpoint directory: bank.json, experiences/, rng.json, plus the two logs.
void save_checkpoint(const std::filesystem::path& dir, const RunState& state,
                     const GroupingConfig& cfg);
RunState load_checkpoint(const std::filesystem::path& dir);

void write_grouping_log(std::ostream& os, const std::vector<IterationLog>& log,
                        const std::string& config_hash);
void write_compat_log(std::ostream& os, const std::vector<CompatRow>& rows,
                      compat::ScorerKind kind, const std::string& config_hash);

// Policy bank persistence without run bookkeeping.
nlohmann::json bank_to_json(const PolicyBank& bank);
void save_bank(const std::filesystem::path& dir, const PolicyBank& bank);
PolicyBank load_bank(const std::filesystem::path& dir);

// Threshold calibration from a pilot: fixed-parameter rollouts on a seeded
// subset of at most `max_tasks` tasks, scored pairwise with the configured
// scorer. Values are in distance units.
struct PilotResult {
  compat::Thresholds thresholds;
  std::vector<double> scores;
  std::vector<std::string> task_ids;
};
PilotResult pilot_calibration(const std::vector<netsim::TrafficTask>& tasks,
                              const GroupingConfig& cfg, std::size_t max_tasks = 12);

// Runs `fn(i)` for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace taskbank::grouping
