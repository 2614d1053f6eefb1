#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "taskbank/bank.hpp"
#include "taskbank/netsim.hpp"
#include "taskbank/rl.hpp"

namespace taskbank::metrics {

inline constexpr double kStepsPerUnit = 100000.0;

struct TaskReward {
  std::string policy_id;  // "fp" / "ar" for baselines
  std::string task_id;
  double reward = 0.0;
};

struct EvalResult {
  std::string method;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  double threshold = std::numeric_limits<double>::quiet_NaN();
  double rho = 0.0;
  long w_steps = 0;
  double xi = std::numeric_limits<double>::quiet_NaN();  // NaN when w = 0
  int num_trained = 0;
  std::vector<TaskReward> per_task;

  double w_units() const { return static_cast<double>(w_steps) / kStepsPerUnit; }
};

using TaskIndex = std::map<std::string, const netsim::TrafficTask*>;
TaskIndex index_tasks(const std::vector<netsim::TrafficTask>& tasks);

std::uint64_t rho_seed(std::uint64_t seed, const std::string& task_id);

struct RhoResult {
  double rho = 0.0;
  std::vector<TaskReward> per_task;
};

// Mean cumulative reward of each policy on its training tasks and grouped
// tasks, one fresh-seed rollout per pair.
RhoResult compute_rho(const PolicyBank& bank, const TaskIndex& tasks,
                      const netsim::SimConfig& sim, int eval_steps,
                      std::uint64_t seed, int jobs = 1);
double mean_reward(const std::vector<TaskReward>& per_task);

double compute_xi(double rho, long w_steps);

// Proportional load-difference handover offsets: a loaded cell gets negative
// offsets towards lighter cells. beta and lambda stay at the fixed-parameter
// defaults.
netsim::ActionParams ar_action(const netsim::StateVector& s, double kappa = 6.0);

rl::Evaluation fp_evaluation(const netsim::TrafficTask& task,
                             const netsim::SimConfig& sim, int eval_steps,
                             std::uint64_t seed);
rl::Evaluation ar_evaluation(const netsim::TrafficTask& task,
                             const netsim::SimConfig& sim, int eval_steps,
                             std::uint64_t seed, double kappa = 6.0);
double fp_baseline(const netsim::TrafficTask& task, const netsim::SimConfig& sim,
                   int eval_steps, std::uint64_t seed);
double ar_baseline(const netsim::TrafficTask& task, const netsim::SimConfig& sim,
                   int eval_steps, std::uint64_t seed, double kappa = 6.0);

// FP or AR over every task, evaluated with the same per-task seeds as rho.
EvalResult baseline_result(const std::string& method,
                           const std::vector<netsim::TrafficTask>& tasks,
                           const netsim::SimConfig& sim, int eval_steps,
                           std::uint64_t seed, int jobs = 1);

// report.csv and per-task rewards. Readers skip '#' comment lines.
void write_report_header(std::ostream& os);
void append_report_row(std::ostream& os, const EvalResult& r);
std::vector<EvalResult> read_report(std::istream& is);
void write_per_task(std::ostream& os, const EvalResult& r);
std::vector<TaskReward> read_per_task(std::istream& is);

std::string format_double(double v);

}  // namespace taskbank::metrics
