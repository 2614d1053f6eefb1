#include "taskbank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "taskbank/grouping.hpp"
#include "taskbank/seeding.hpp"

namespace taskbank::metrics {

TaskIndex index_tasks(const std::vector<netsim::TrafficTask>& tasks) {
  TaskIndex idx;
  for (const auto& t : tasks) idx[t.task_id] = &t;
  return idx;
}

std::uint64_t rho_seed(std::uint64_t seed, const std::string& task_id) {
  return derive_seed(seed, "rho:" + task_id);
}

double mean_reward(const std::vector<TaskReward>& per_task) {
  if (per_task.empty()) throw std::invalid_argument("mean_reward: no evaluations");
  double sum = 0.0;
  for (const auto& r : per_task) sum += r.reward;
  return sum / static_cast<double>(per_task.size());
}

RhoResult compute_rho(const PolicyBank& bank, const TaskIndex& tasks,
                      const netsim::SimConfig& sim, int eval_steps,
                      std::uint64_t seed, int jobs) {
  if (bank.policies.empty()) throw std::invalid_argument("compute_rho: empty bank");
  struct Pair {
    const rl::Policy* policy;
    const netsim::TrafficTask* task;
  };
  std::vector<Pair> pairs;
  for (const auto& p : bank.policies) {
    std::set<std::string> covered(p.provenance.trained_task_ids.begin(),
                                  p.provenance.trained_task_ids.end());
    if (auto it = bank.groups.find(p.policy_id); it != bank.groups.end())
      covered.insert(it->second.begin(), it->second.end());
    for (const auto& id : covered) {
      auto t = tasks.find(id);
      if (t == tasks.end()) throw std::invalid_argument("compute_rho: unknown task " + id);
      pairs.push_back({&p, t->second});
    }
  }
  RhoResult out;
  out.per_task.resize(pairs.size());
  grouping::parallel_for(pairs.size(), jobs, [&](std::size_t i) {
    const auto& [policy, task] = pairs[i];
    const auto ev = rl::evaluate_policy(*policy, *task, sim, eval_steps,
                                        rho_seed(seed, task->task_id));
    out.per_task[i] = {policy->policy_id, task->task_id, ev.cumulative_reward};
  });
  out.rho = mean_reward(out.per_task);
  return out;
}

double compute_xi(double rho, long w_steps) {
  if (w_steps <= 0) throw std::invalid_argument("compute_xi: w_steps must be positive");
  return rho / (static_cast<double>(w_steps) / kStepsPerUnit);
}

netsim::ActionParams ar_action(const netsim::StateVector& s, double kappa) {
  const int n = static_cast<int>(s.utilization.size());
  auto a = netsim::default_action(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j)
        a.alpha_at(i, j) = std::clamp(kappa * (s.utilization[j] - s.utilization[i]),
                                      netsim::kAlphaMin, netsim::kAlphaMax);
  return a;
}

rl::Evaluation fp_evaluation(const netsim::TrafficTask& task,
                             const netsim::SimConfig& sim, int eval_steps,
                             std::uint64_t seed) {
  const auto fixed = netsim::default_action(sim.n_cells);
  return rl::evaluate_controller([&](const netsim::StateVector&) { return fixed; },
                                 task, sim, eval_steps, seed, "fp");
}

rl::Evaluation ar_evaluation(const netsim::TrafficTask& task,
                             const netsim::SimConfig& sim, int eval_steps,
                             std::uint64_t seed, double kappa) {
  return rl::evaluate_controller(
      [kappa](const netsim::StateVector& s) { return ar_action(s, kappa); }, task, sim,
      eval_steps, seed, "ar");
}

double fp_baseline(const netsim::TrafficTask& task, const netsim::SimConfig& sim,
                   int eval_steps, std::uint64_t seed) {
  return fp_evaluation(task, sim, eval_steps, seed).cumulative_reward;
}

double ar_baseline(const netsim::TrafficTask& task, const netsim::SimConfig& sim,
                   int eval_steps, std::uint64_t seed, double kappa) {
  return ar_evaluation(task, sim, eval_steps, seed, kappa).cumulative_reward;
}

EvalResult baseline_result(const std::string& method,
                           const std::vector<netsim::TrafficTask>& tasks,
                           const netsim::SimConfig& sim, int eval_steps,
                           std::uint64_t seed, int jobs) {
  if (method != "fp" && method != "ar")
    throw std::invalid_argument("baseline_result: method must be fp or ar");
  EvalResult r;
  r.method = method;
  r.seed = seed;
  r.per_task.resize(tasks.size());
  grouping::parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    const auto& t = tasks[i];
    const auto s = rho_seed(seed, t.task_id);
    const double reward = method == "fp" ? fp_baseline(t, sim, eval_steps, s)
                                         : ar_baseline(t, sim, eval_steps, s);
    r.per_task[i] = {method, t.task_id, reward};
  });
  r.rho = mean_reward(r.per_task);
  return r;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

double parse_double(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Yields data rows, skipping comments and the header.
std::vector<std::vector<std::string>> data_rows(std::istream& is,
                                                const std::string& header) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool seen_header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (line != header) throw std::invalid_argument("unexpected header: " + line);
      seen_header = true;
      continue;
    }
    rows.push_back(split_csv(line));
  }
  return rows;
}

const char* kReportHeader = "method,seed,n,threshold,rho,w_steps,xi,num_trained";
const char* kPerTaskHeader = "method,seed,policy_id,task_id,reward";

}  // namespace

void write_report_header(std::ostream& os) { os << kReportHeader << '\n'; }

void append_report_row(std::ostream& os, const EvalResult& r) {
  os << r.method << ',' << r.seed << ',' << r.n << ',' << format_double(r.threshold)
     << ',' << format_double(r.rho) << ',' << r.w_steps << ',' << format_double(r.xi)
     << ',' << r.num_trained << '\n';
}

std::vector<EvalResult> read_report(std::istream& is) {
  std::vector<EvalResult> out;
  for (const auto& c : data_rows(is, kReportHeader)) {
    if (c.size() != 8) throw std::invalid_argument("report.csv: bad row");
    EvalResult r;
    r.method = c[0];
    r.seed = std::stoull(c[1]);
    r.n = std::stoul(c[2]);
    r.threshold = parse_double(c[3]);
    r.rho = parse_double(c[4]);
    r.w_steps = std::stol(c[5]);
    r.xi = parse_double(c[6]);
    r.num_trained = std::stoi(c[7]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_per_task(std::ostream& os, const EvalResult& r) {
  os << kPerTaskHeader << '\n';
  for (const auto& t : r.per_task)
    os << r.method << ',' << r.seed << ',' << t.policy_id << ',' << t.task_id << ','
       << format_double(t.reward) << '\n';
}

std::vector<TaskReward> read_per_task(std::istream& is) {
  std::vector<TaskReward> out;
  for (const auto& c : data_rows(is, kPerTaskHeader)) {
    if (c.size() != 5) throw std::invalid_argument("per_task.csv: bad row");
    out.push_back({c[2], c[3], parse_double(c[4])});
  }
  return out;
}

}  // namespace taskbank::metrics
