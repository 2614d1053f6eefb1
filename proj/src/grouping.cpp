#include "taskbank/grouping.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "taskbank/seeding.hpp"

namespace taskbank::grouping {

namespace fs = std::filesystem;

namespace {

nlohmann::json threshold_to_json(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  return t;
}

double threshold_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
    throw std::invalid_argument("threshold: expected a number, inf or -inf");
  }
  return j.get<double>();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_atomic(const fs::path& p, const std::string& content) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, p);
}

nlohmann::json experience_to_json(const rl::Experience& e) {
  return {{"task_id", e.task_id},
          {"policy_id", e.policy_id},
          {"seed", e.seed},
          {"states", e.states}};
}

rl::Experience experience_from_json(const nlohmann::json& j) {
  rl::Experience e;
  e.task_id = j.at("task_id").get<std::string>();
  e.policy_id = j.at("policy_id").get<std::string>();
  e.seed = j.at("seed").get<std::uint64_t>();
  e.states = j.at("states").get<std::vector<std::vector<double>>>();
  e.validate();
  return e;
}

nlohmann::json compat_report_to_json(const CompatRow& r) {
  return {{"iteration", r.iteration},
          {"policy_id", r.report.policy_id},
          {"task_id", r.report.task_id},
          {"distance", r.report.distance},
          {"per_dimension", r.report.per_dimension_scores},
          {"threshold", threshold_to_json(r.report.threshold)},
          {"compatible", r.report.compatible}};
}

CompatRow compat_row_from_json(const nlohmann::json& j) {
  CompatRow r;
  r.iteration = j.at("iteration").get<int>();
  r.report.policy_id = j.at("policy_id").get<std::string>();
  r.report.task_id = j.at("task_id").get<std::string>();
  r.report.distance = j.at("distance").get<double>();
  r.report.per_dimension_scores = j.at("per_dimension").get<std::vector<double>>();
  r.report.threshold = threshold_from_json(j.at("threshold"));
  r.report.compatible = j.at("compatible").get<bool>();
  return r;
}

nlohmann::json iteration_to_json(const IterationLog& l) {
  return {{"iteration", l.iteration},
          {"tasks_sampled", l.tasks_sampled},
          {"num_compatible", l.num_compatible},
          {"num_trained", l.num_trained},
          {"bank_size", l.bank_size},
          {"w_steps", l.w_steps},
          {"rho", std::isnan(l.rho) ? nlohmann::json(nullptr) : nlohmann::json(l.rho)}};
}

IterationLog iteration_from_json(const nlohmann::json& j) {
  IterationLog l;
  l.iteration = j.at("iteration").get<int>();
  l.tasks_sampled = j.at("tasks_sampled").get<int>();
  l.num_compatible = j.at("num_compatible").get<int>();
  l.num_trained = j.at("num_trained").get<int>();
  l.bank_size = j.at("bank_size").get<std::size_t>();
  l.w_steps = j.at("w_steps").get<long>();
  if (!j.at("rho").is_null()) l.rho = j.at("rho").get<double>();
  return l;
}

}  // namespace

void GroupingConfig::validate() const {
  if (n < 1) throw std::invalid_argument("grouping: n must be >= 1");
  if (k < 1) throw std::invalid_argument("grouping: k must be >= 1");
  if (std::isnan(threshold)) throw std::invalid_argument("grouping: threshold is NaN");
  if (eval_steps < 1) throw std::invalid_argument("grouping: eval_steps must be >= 1");
  if (jobs < 1) throw std::invalid_argument("grouping: jobs must be >= 1");
  scorer.validate();
  sim.validate();
  ppo.validate();
  distill.validate();
}

nlohmann::json to_json(const GroupingConfig& c) {
  return {{"n", c.n},
          {"k", c.k},
          {"scorer",
           {{"kind", compat::to_string(c.scorer.kind)},
            {"window_fraction", c.scorer.window_fraction},
            {"min_seg", c.scorer.min_seg},
            {"chi_mbps", c.scorer.chi_mbps}}},
          {"threshold", threshold_to_json(c.threshold)},
          {"sim", netsim::to_json(c.sim)},
          {"ppo", rl::to_json(c.ppo)},
          {"distill", distill::to_json(c.distill)},
          {"eval_steps", c.eval_steps},
          {"master_seed", c.master_seed}};
}

GroupingConfig grouping_config_from_json(const nlohmann::json& j) {
  GroupingConfig c;
  c.n = j.value("n", c.n);
  c.k = j.value("k", c.k);
  if (j.contains("scorer")) {
    const auto& s = j.at("scorer");
    c.scorer.kind = compat::scorer_kind_from_string(s.value("kind", "binseg"));
    c.scorer.window_fraction = s.value("window_fraction", c.scorer.window_fraction);
    c.scorer.min_seg = s.value("min_seg", c.scorer.min_seg);
    c.scorer.chi_mbps = s.value("chi_mbps", c.scorer.chi_mbps);
  }
  if (j.contains("threshold")) c.threshold = threshold_from_json(j.at("threshold"));
  if (j.contains("sim")) c.sim = netsim::sim_config_from_json(j.at("sim"));
  if (j.contains("ppo")) c.ppo = rl::ppo_config_from_json(j.at("ppo"));
  if (j.contains("distill")) c.distill = distill::distill_config_from_json(j.at("distill"));
  c.eval_steps = j.value("eval_steps", c.eval_steps);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.validate();
  return c;
}

std::string config_hash(const GroupingConfig& cfg) {
  return hex64(hash_tag(to_json(cfg).dump()));
}

std::uint64_t training_seed(std::uint64_t master, const std::string& task_id) {
  return derive_seed(master, "train:" + task_id);
}

std::uint64_t assess_seed(std::uint64_t master, const std::string& task_id) {
  return derive_seed(master, "assess:" + task_id);
}

std::string policy_id_for(const std::string& task_id) { return "pi_" + task_id; }

std::vector<std::vector<std::string>> sampling_plan(
    const std::vector<netsim::TrafficTask>& tasks, std::size_t k,
    std::uint64_t master) {
  if (k < 1) throw std::invalid_argument("sampling_plan: k must be >= 1");
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& t : tasks) {
    if (!seen.insert(t.task_id).second)
      throw std::invalid_argument("duplicate task id: " + t.task_id);
    ids.push_back(t.task_id);
  }
  std::mt19937_64 rng(derive_seed(master, "order"));
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::vector<std::string>> plan;
  for (std::size_t i = 0; i < ids.size(); i += k)
    plan.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(i),
                      ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), i + k)));
  return plan;
}

rl::TrainResult train_for_task(const netsim::TrafficTask& task,
                               const GroupingConfig& cfg) {
  return rl::train_policy(task, cfg.sim, cfg.ppo,
                          training_seed(cfg.master_seed, task.task_id),
                          assess_seed(cfg.master_seed, task.task_id),
                          policy_id_for(task.task_id));
}

TrainingCache::TrainingCache(fs::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) fs::create_directories(dir_);
}

std::string TrainingCache::key(const netsim::TrafficTask& task,
                               const GroupingConfig& cfg) const {
  const nlohmann::json j = {
      {"task", netsim::to_json(task)},
      {"sim", netsim::to_json(cfg.sim)},
      {"ppo", rl::to_json(cfg.ppo)},
      {"seed", training_seed(cfg.master_seed, task.task_id)},
      {"eval_seed", assess_seed(cfg.master_seed, task.task_id)}};
  return hex64(hash_tag(j.dump()));
}

rl::TrainResult TrainingCache::operator()(const netsim::TrafficTask& task,
                                          const GroupingConfig& cfg) {
  const std::string k = key(task, cfg);
  {
    std::lock_guard lock(mu_);
    if (auto it = mem_.find(k); it != mem_.end()) {
      ++hits_;
      return it->second;
    }
  }
  const fs::path file = dir_.empty() ? fs::path{} : dir_ / (k + ".json");
  if (!file.empty() && fs::exists(file)) {
    const auto j = nlohmann::json::parse(read_file(file));
    rl::TrainResult r;
    r.policy = rl::policy_from_json(j.at("policy"));
    for (const auto& e : j.at("training_experiences"))
      r.policy.training_experiences.push_back(experience_from_json(e));
    r.env_steps_used = j.at("env_steps_used").get<long>();
    r.episode_returns = j.at("episode_returns").get<std::vector<double>>();
    std::lock_guard lock(mu_);
    ++hits_;
    mem_.emplace(k, r);
    return r;
  }
  auto r = train_for_task(task, cfg);
  if (!file.empty()) {
    nlohmann::json exps = nlohmann::json::array();
    for (const auto& e : r.policy.training_experiences) exps.push_back(experience_to_json(e));
    const nlohmann::json j = {{"policy", rl::to_json(r.policy)},
                              {"training_experiences", exps},
                              {"env_steps_used", r.env_steps_used},
                              {"episode_returns", r.episode_returns}};
    write_file_atomic(file, j.dump());
  }
  std::lock_guard lock(mu_);
  ++misses_;
  mem_.emplace(k, r);
  return r;
}

TrainFn TrainingCache::fn() {
  return [this](const netsim::TrafficTask& t, const GroupingConfig& c) {
    return (*this)(t, c);
  };
}

void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

AssessResult assess(const PolicyBank& bank,
                    const std::vector<const netsim::TrafficTask*>& tasks,
                    const compat::Scorer& scorer, double threshold,
                    const GroupingConfig& cfg) {
  for (const auto& p : bank.policies)
    if (p.training_experiences.empty())
      throw std::invalid_argument("assess: policy without training experience: " +
                                  p.policy_id);
  AssessResult out;
  if (bank.policies.empty()) {
    for (const auto* t : tasks) out.incompatible.push_back(t->task_id);
    return out;
  }
  const std::size_t P = bank.policies.size();
  std::vector<compat::CompatReport> reports(tasks.size() * P);
  parallel_for(reports.size(), cfg.jobs, [&](std::size_t idx) {
    const auto* task = tasks[idx / P];
    const auto& policy = bank.policies[idx % P];
    const auto test = rl::evaluate_policy(policy, *task, cfg.sim, cfg.eval_steps,
                                          assess_seed(cfg.master_seed, task->task_id))
                          .experience;
    compat::CompatReport best;
    bool have = false;
    for (const auto& train : policy.training_experiences) {
      auto r = scorer.assess(train, test, threshold, policy.policy_id);
      if (!have || r.distance < best.distance) {
        best = std::move(r);
        have = true;
      }
    }
    reports[idx] = std::move(best);
  });

  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const compat::CompatReport* best = nullptr;
    for (std::size_t p = 0; p < P; ++p) {
      const auto& r = reports[t * P + p];
      if (!best || r.distance < best->distance ||
          (r.distance == best->distance && r.policy_id < best->policy_id))
        best = &r;
    }
    if (best->compatible)
      out.grouped[tasks[t]->task_id] = best->policy_id;
    else
      out.incompatible.push_back(tasks[t]->task_id);
  }
  out.reports = std::move(reports);
  return out;
}

PilotResult pilot_calibration(const std::vector<netsim::TrafficTask>& tasks,
                              const GroupingConfig& cfg, std::size_t max_tasks) {
  cfg.validate();
  std::vector<const netsim::TrafficTask*> subset;
  for (const auto& t : tasks) subset.push_back(&t);
  std::mt19937_64 rng(derive_seed(cfg.master_seed, "pilot"));
  std::shuffle(subset.begin(), subset.end(), rng);
  if (subset.size() > max_tasks) subset.resize(max_tasks);
  if (subset.size() < 2) throw std::invalid_argument("pilot: need at least 2 tasks");

  const auto fixed = netsim::default_action(cfg.sim.n_cells);
  std::vector<rl::Experience> exps(subset.size());
  parallel_for(subset.size(), cfg.jobs, [&](std::size_t i) {
    exps[i] = rl::evaluate_controller(
                  [&](const netsim::StateVector&) { return fixed; }, *subset[i],
                  cfg.sim, cfg.eval_steps, assess_seed(cfg.master_seed, subset[i]->task_id),
                  "pilot")
                  .experience;
  });
  const auto scorer = compat::make_scorer(cfg.scorer);
  const std::size_t m = subset.size();
  PilotResult out;
  out.scores.assign(m * (m - 1), 0.0);
  parallel_for(m * m, cfg.jobs, [&](std::size_t idx) {
    const std::size_t i = idx / m, j = idx % m;
    if (i == j) return;
    const std::size_t slot = i * (m - 1) + (j < i ? j : j - 1);
    out.scores[slot] = scorer->distance(exps[i], exps[j]);
  });
  for (const auto* t : subset) out.task_ids.push_back(t->task_id);
  out.thresholds = compat::calibrate_threshold(out.scores);
  return out;
}

RunState run(const std::vector<netsim::TrafficTask>& tasks,
             const GroupingConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  if (tasks.empty()) throw std::invalid_argument("run: no tasks");
  std::map<std::string, const netsim::TrafficTask*> by_id;
  for (const auto& t : tasks) by_id[t.task_id] = &t;

  RunState st;
  const std::string hash = config_hash(cfg);
  if (opts.resume && !opts.checkpoint_dir.empty() &&
      fs::exists(opts.checkpoint_dir / "bank.json")) {
    st = load_checkpoint(opts.checkpoint_dir);
    if (st.config_hash != hash)
      throw std::invalid_argument("checkpoint was written with a different config");
  } else {
    st.plan = sampling_plan(tasks, cfg.k, cfg.master_seed);
    st.config_hash = hash;
  }
  for (const auto& chunk : st.plan)
    for (const auto& id : chunk)
      if (!by_id.count(id)) throw std::invalid_argument("checkpoint names unknown task " + id);

  const auto scorer = compat::make_scorer(cfg.scorer);
  const TrainFn train = opts.train ? opts.train : TrainFn(train_for_task);
  distill::DistillConfig dcfg = cfg.distill;
  dcfg.seed = derive_seed(cfg.master_seed ^ cfg.distill.seed, "distill");

  int iterations = 0;
  while (!st.done()) {
    if (opts.max_iterations >= 0 && iterations >= opts.max_iterations) break;
    const int it = static_cast<int>(st.next_chunk);
    std::vector<const netsim::TrafficTask*> sample;
    for (const auto& id : st.plan[st.next_chunk]) sample.push_back(by_id.at(id));

    IterationLog log;
    log.iteration = it;
    log.tasks_sampled = static_cast<int>(sample.size());

    std::vector<const netsim::TrafficTask*> to_train;
    if (it == 0) {
      to_train = sample;
    } else {
      auto a = assess(st.bank, sample, *scorer, cfg.threshold, cfg);
      for (auto& r : a.reports) st.compat_rows.push_back({it, std::move(r)});
      for (const auto& [task_id, policy_id] : a.grouped)
        st.bank.groups[policy_id].insert(task_id);
      log.num_compatible = static_cast<int>(a.grouped.size());
      for (const auto& id : a.incompatible) to_train.push_back(by_id.at(id));
    }

    std::vector<rl::TrainResult> trained(to_train.size());
    parallel_for(to_train.size(), cfg.jobs,
                 [&](std::size_t i) { trained[i] = train(*to_train[i], cfg); });
    for (auto& r : trained) {
      st.bank.w_steps += r.env_steps_used;
      st.bank.policies.push_back(std::move(r.policy));
    }
    log.num_trained = static_cast<int>(trained.size());

    st.bank.iteration = it;
    distill::cap_bank(st.bank, cfg.n, dcfg);
    log.bank_size = st.bank.size();
    log.w_steps = st.bank.w_steps;
    if (opts.progress_metric) log.rho = opts.progress_metric(st.bank);
    st.log.push_back(log);
    ++st.next_chunk;
    ++iterations;
    if (!opts.checkpoint_dir.empty()) save_checkpoint(opts.checkpoint_dir, st, cfg);
  }
  return st;
}

nlohmann::json bank_to_json(const PolicyBank& bank) {
  nlohmann::json policies = nlohmann::json::array();
  for (const auto& p : bank.policies) policies.push_back(rl::to_json(p));
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [id, tasks] : bank.groups)
    groups[id] = std::vector<std::string>(tasks.begin(), tasks.end());
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& m : bank.merges) merges.push_back(to_json(m));
  return {{"schema", 1},
          {"policies", policies},
          {"groups", groups},
          {"w_steps", bank.w_steps},
          {"iteration", bank.iteration},
          {"next_merge_id", bank.next_merge_id},
          {"merges", merges}};
}

namespace {

void save_experiences(const fs::path& dir, const PolicyBank& bank) {
  const fs::path exp_dir = dir / "experiences";
  fs::create_directories(exp_dir);
  for (const auto& p : bank.policies) {
    for (const auto& e : p.training_experiences) {
      const fs::path csv = exp_dir / (e.key() + ".csv");
      if (fs::exists(csv)) continue;  // experiences never change once written
      write_file_atomic(exp_dir / (e.key() + ".json"), experience_sidecar(e).dump(2));
      write_file_atomic(csv, rl::experience_to_csv(e));
    }
  }
}

PolicyBank bank_from_json(const nlohmann::json& j, const fs::path& dir) {
  if (j.value("schema", 0) != 1)
    throw std::invalid_argument("bank.json: unsupported schema version");
  PolicyBank bank;
  for (const auto& pj : j.at("policies")) {
    auto p = rl::policy_from_json(pj);
    for (const auto& key : pj.at("experiences")) {
      const fs::path base = dir / "experiences" / key.get<std::string>();
      const auto side = nlohmann::json::parse(read_file(base.string() + ".json"));
      p.training_experiences.push_back(rl::experience_from_csv(
          read_file(base.string() + ".csv"), side.at("task_id").get<std::string>(),
          side.at("policy_id").get<std::string>(), side.at("seed").get<std::uint64_t>()));
    }
    bank.policies.push_back(std::move(p));
  }
  for (const auto& [id, tasks] : j.at("groups").items()) {
    auto v = tasks.get<std::vector<std::string>>();
    bank.groups[id] = std::set<std::string>(v.begin(), v.end());
  }
  bank.w_steps = j.at("w_steps").get<long>();
  bank.iteration = j.at("iteration").get<int>();
  bank.next_merge_id = j.at("next_merge_id").get<int>();
  for (const auto& m : j.at("merges")) bank.merges.push_back(merge_record_from_json(m));
  return bank;
}

}  // namespace

void save_bank(const fs::path& dir, const PolicyBank& bank) {
  fs::create_directories(dir);
  save_experiences(dir, bank);
  write_file_atomic(dir / "bank.json", bank_to_json(bank).dump());
}

PolicyBank load_bank(const fs::path& dir) {
  return bank_from_json(nlohmann::json::parse(read_file(dir / "bank.json")), dir);
}

void write_grouping_log(std::ostream& os, const std::vector<IterationLog>& log,
                        const std::string& hash) {
  os << "# schema=1 config_hash=" << hash << "\n";
  os << "iteration,tasks_sampled,num_compatible,num_trained,bank_size,w_steps,rho\n";
  char rho[32];
  for (const auto& l : log) {
    std::snprintf(rho, sizeof rho, "%.17g", l.rho);
    os << l.iteration << ',' << l.tasks_sampled << ',' << l.num_compatible << ','
       << l.num_trained << ',' << l.bank_size << ',' << l.w_steps << ',' << rho << '\n';
  }
}

void write_compat_log(std::ostream& os, const std::vector<CompatRow>& rows,
                      compat::ScorerKind kind, const std::string& hash) {
  os << "# schema=1 config_hash=" << hash << "\n";
  compat::write_compat_log_header(os);
  for (const auto& r : rows) compat::append_compat_log(os, r.iteration, kind, r.report);
}

void save_checkpoint(const fs::path& dir, const RunState& st,
                     const GroupingConfig& cfg) {
  fs::create_directories(dir);
  save_experiences(dir, st.bank);

  nlohmann::json rng = {{"schema", 1},
                        {"master_seed", cfg.master_seed},
                        {"order_seed", derive_seed(cfg.master_seed, "order")},
                        {"plan", st.plan}};
  write_file_atomic(dir / "rng.json", rng.dump(2));

  nlohmann::json j = bank_to_json(st.bank);
  nlohmann::json log = nlohmann::json::array();
  for (const auto& l : st.log) log.push_back(iteration_to_json(l));
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : st.compat_rows) rows.push_back(compat_report_to_json(r));
  j["run"] = {{"config_hash", st.config_hash},
              {"config", to_json(cfg)},
              {"next_chunk", st.next_chunk},
              {"log", log},
              {"compat_rows", rows}};

  std::ostringstream glog, clog;
  write_grouping_log(glog, st.log, st.config_hash);
  write_compat_log(clog, st.compat_rows, cfg.scorer.kind, st.config_hash);
  write_file_atomic(dir / "grouping_log.csv", glog.str());
  write_file_atomic(dir / "compat_log.csv", clog.str());
  std::ostringstream merges;
  for (const auto& m : st.bank.merges) merges << to_json(m).dump() << '\n';
  write_file_atomic(dir / "merges.jsonl", merges.str());
  // bank.json goes last: it is what marks the checkpoint as complete.
  write_file_atomic(dir / "bank.json", j.dump());
}

RunState load_checkpoint(const fs::path& dir) {
  const auto j = nlohmann::json::parse(read_file(dir / "bank.json"));
  const auto rng = nlohmann::json::parse(read_file(dir / "rng.json"));
  RunState st;
  st.bank = bank_from_json(j, dir);
  st.plan = rng.at("plan").get<std::vector<std::vector<std::string>>>();
  const auto& run = j.at("run");
  st.config_hash = run.at("config_hash").get<std::string>();
  st.next_chunk = run.at("next_chunk").get<std::size_t>();
  for (const auto& l : run.at("log")) st.log.push_back(iteration_from_json(l));
  for (const auto& r : run.at("compat_rows")) st.compat_rows.push_back(compat_row_from_json(r));
  return st;
}

}  // namespace taskbank::grouping
