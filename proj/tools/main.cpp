// taskbank: generate tasks, build policy banks, evaluate and report.
//
// Exit codes: 0 ok, 2 bad configuration or arguments, 3 missing inputs,
// 4 runtime failure (the checkpoint directory is printed).

#include <cstdio>
#include <iostream>
#include <map>
#include <random>

#include <CLI11.hpp>

#include "experiment.hpp"

using namespace taskbank;
using namespace taskbank::cli;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitRuntime = 4;

struct ConfigFlags {
  std::string config_file;
  bool desk = false;
  std::string method, tasks, out, threshold;
  std::vector<std::uint64_t> seeds;
  int n = 0, k = 0, jobs = 0, eval_steps = 0;
  std::vector<std::string> sets;
};

void add_config_flags(CLI::App* app, ConfigFlags& f, bool learning) {
  app->add_option("--config", f.config_file, "JSON config file, nested or dotted keys");
  app->add_flag("--desk", f.desk, "Desk-scale simulator and PPO budget");
  app->add_option("--method", f.method, learning ? "ts | kt | pr | bg" : "fp | ar");
  app->add_option("--tasks", f.tasks, "Task file from gen-tasks");
  app->add_option("--out", f.out, "Output root (default $TASKBANK_OUT or ./taskbank_out)");
  app->add_option("--seeds", f.seeds, "Master seeds")->delimiter(',');
  app->add_option("--jobs", f.jobs, "Worker threads");
  app->add_option("--eval-steps", f.eval_steps, "Evaluation episode length");
  if (learning) {
    app->add_option("--threshold", f.threshold, "auto, auto:loose, auto:tight, a number, inf or -inf");
    app->add_option("--n", f.n, "Bank size limit");
    app->add_option("--k", f.k, "Tasks per sample");
  }
  app->add_option("--set", f.sets, "Override any config key: dotted.key=value");
}

// defaults < desk preset < config file < flags < --set
ExperimentConfig resolve(const ConfigFlags& f) {
  auto doc = default_config_json();
  if (f.desk) apply_desk_preset(doc);
  if (!f.config_file.empty()) merge_config_file(doc, f.config_file);
  if (!f.method.empty()) set_dotted(doc, "method", f.method);
  if (!f.tasks.empty()) set_dotted(doc, "tasks", f.tasks);
  if (!f.out.empty()) set_dotted(doc, "out", f.out);
  if (!f.seeds.empty()) set_dotted(doc, "seeds", f.seeds);
  if (f.jobs > 0) set_dotted(doc, "jobs", f.jobs);
  if (f.eval_steps > 0) set_dotted(doc, "eval_steps", f.eval_steps);
  if (!f.threshold.empty()) set_dotted(doc, "scorer.threshold", f.threshold);
  if (f.n > 0) set_dotted(doc, "n", f.n);
  if (f.k > 0) set_dotted(doc, "k", f.k);
  for (const auto& s : f.sets) apply_assignment(doc, s);
  return config_from_json(doc);
}

void print_result(const metrics::EvalResult& r) {
  std::printf("%-3s seed=%llu rho=%.4f w=%ld xi=%s trained=%d\n", r.method.c_str(),
              static_cast<unsigned long long>(r.seed), r.rho, r.w_steps,
              metrics::format_double(r.xi).c_str(), r.num_trained);
}

int gen_tasks(const netsim::TaskGenOptions& o, const std::string& out) {
  const auto tasks = netsim::generate_tasks(o);
  const std::string text = netsim::tasks_to_json(tasks).dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
    std::map<int, std::vector<const netsim::TrafficTask*>> by_arch;
    for (const auto& t : tasks) by_arch[t.archetype].push_back(&t);
    std::printf("archetype  tasks  base rates per cell (UE/s)\n");
    for (const auto& [a, ts] : by_arch) {
      std::printf("%9d  %5zu ", a, ts.size());
      for (const auto& c : ts.front()->cells) std::printf(" %.3f", c.base_rate);
      std::printf("\n");
    }
    std::printf("wrote %zu tasks to %s\n", tasks.size(), out.c_str());
  }
  return 0;
}

const rl::Policy* policy_covering(const PolicyBank& bank, const std::string& task_id) {
  for (const auto& p : bank.policies) {
    for (const auto& t : p.provenance.trained_task_ids)
      if (t == task_id) return &p;
    const auto it = bank.groups.find(p.policy_id);
    if (it != bank.groups.end() && it->second.count(task_id)) return &p;
  }
  return nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy bank construction for traffic-adaptive cell reselection"};
  app.require_subcommand(1);

  netsim::TaskGenOptions gen;
  std::string gen_out;
  bool gen_desk = false;
  auto* gen_cmd = app.add_subcommand("gen-tasks", "Generate a seeded task file");
  gen_cmd->add_option("--count", gen.count, "Number of tasks");
  gen_cmd->add_option("--archetypes", gen.n_archetypes, "Number of traffic archetypes");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--rate-jitter", gen.rate_jitter, "Relative rate jitter");
  gen_cmd->add_option("--phase-jitter", gen.phase_jitter, "Phase jitter as a fraction of the period");
  auto* period_opt = gen_cmd->add_option("--period", gen.period_s, "Traffic period in seconds");
  gen_cmd->add_flag("--desk", gen_desk, "Period equal to one desk-scale episode")->excludes(period_opt);
  gen_cmd->add_option("--out", gen_out, "Output file (default stdout)");

  ConfigFlags build_flags;
  bool resume = false;
  std::string cache_dir;
  auto* build_cmd = app.add_subcommand("build", "Build policy banks, one run per seed");
  add_config_flags(build_cmd, build_flags, true);
  build_cmd->add_flag("--resume", resume, "Continue from checkpoints in the run directories");
  build_cmd->add_option("--cache", cache_dir, "Training cache directory shared between runs");

  ConfigFlags base_flags;
  auto* base_cmd = app.add_subcommand("baseline", "Fixed-parameter or adaptive-rule baseline");
  add_config_flags(base_cmd, base_flags, false);

  std::string eval_dir, eval_tasks, eval_out;
  std::uint64_t eval_seed = 0;
  int eval_steps = 0, eval_jobs = 1;
  auto* eval_cmd = app.add_subcommand("eval", "Re-evaluate a finished run directory");
  eval_cmd->add_option("--run", eval_dir, "Run directory")->required();
  eval_cmd->add_option("--tasks", eval_tasks, "Task file")->required();
  eval_cmd->add_option("--seed", eval_seed, "Evaluation seed");
  eval_cmd->add_option("--eval-steps", eval_steps, "Episode length (default: the run's)");
  eval_cmd->add_option("--jobs", eval_jobs, "Worker threads");
  eval_cmd->add_option("--out", eval_out, "Write result.csv and per_task.csv here");

  std::string trace_controller, trace_task, trace_tasks, trace_out;
  std::uint64_t trace_seed = 0;
  bool trace_desk = false;
  int trace_steps = 240;
  auto* trace_cmd = app.add_subcommand("trace", "Per-step trace of one rollout");
  trace_cmd->add_option("--controller", trace_controller, "fp, ar or a run directory")->required();
  trace_cmd->add_option("--task", trace_task, "Task id")->required();
  trace_cmd->add_option("--tasks", trace_tasks, "Task file")->required();
  trace_cmd->add_option("--seed", trace_seed, "Rollout seed");
  trace_cmd->add_option("--steps", trace_steps, "Steps");
  trace_cmd->add_flag("--desk", trace_desk, "Desk-scale simulator (fp and ar only)");
  trace_cmd->add_option("--out", trace_out, "Output CSV")->required();

  std::vector<std::string> report_roots;
  std::string report_out = "report";
  auto* report_cmd = app.add_subcommand("report", "Aggregate run directories");
  report_cmd->add_option("roots", report_roots, "Output roots or run directories")->required();
  report_cmd->add_option("--out", report_out, "Report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  fs::path current_run;
  try {
    if (*gen_cmd) {
      if (gen.count <= 0) throw ConfigError("--count must be positive");
      if (gen_desk) {
        auto doc = default_config_json();
        apply_desk_preset(doc);
        gen.period_s = netsim::sim_config_from_json(doc.at("sim")).episode_duration_s();
      }
      try {
        return gen_tasks(gen, gen_out);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }

    if (*build_cmd) {
      const auto cfg = resolve(build_flags);
      const auto tasks = load_tasks(cfg.tasks_path);
      grouping::TrainingCache cache(cache_dir);
      const grouping::TrainFn train = cache_dir.empty() ? grouping::TrainFn{} : cache.fn();
      for (auto seed : cfg.seeds) {
        current_run = run_dir(cfg, seed);
        const auto run = build_seed(cfg, tasks, seed, train, resume);
        print_result(run.result);
      }
      std::printf("runs in %s\n", (cfg.out_dir / run_label(cfg)).string().c_str());
      return 0;
    }

    if (*base_cmd) {
      auto cfg = resolve(base_flags);
      const auto tasks = load_tasks(cfg.tasks_path);
      for (auto seed : cfg.seeds) {
        current_run = run_dir(cfg, seed);
        print_result(baseline_seed(cfg, tasks, seed).result);
      }
      return 0;
    }

    if (*eval_cmd) {
      const auto tasks = load_tasks(eval_tasks);
      if (eval_steps <= 0) {
        const fs::path cfg_file = fs::path(eval_dir) / "config.json";
        if (!fs::exists(cfg_file)) throw MissingInput("no config.json in " + eval_dir);
        eval_steps = nlohmann::json::parse(std::ifstream(cfg_file)).at("config").value("eval_steps", 240);
      }
      const auto r = eval_run(eval_dir, tasks, eval_seed, eval_steps, eval_jobs);
      print_result(r);
      if (!eval_out.empty()) write_result(eval_out, r, "eval");
      return 0;
    }

    if (*trace_cmd) {
      const auto tasks = load_tasks(trace_tasks);
      const auto idx = metrics::index_tasks(tasks);
      const auto it = idx.find(trace_task);
      if (it == idx.end()) throw ConfigError("unknown task " + trace_task);
      auto doc = default_config_json();
      if (trace_desk) apply_desk_preset(doc);
      auto sim = netsim::sim_config_from_json(doc.at("sim"));
      rl::Controller controller;
      PolicyBank bank;
      if (trace_controller == "fp") {
        controller = [&](const netsim::StateVector&) { return netsim::default_action(sim.n_cells); };
      } else if (trace_controller == "ar") {
        controller = [](const netsim::StateVector& s) { return metrics::ar_action(s); };
      } else {
        const fs::path dir(trace_controller);
        if (!fs::exists(dir / "bank.json")) throw MissingInput("no bank.json in " + dir.string());
        const auto st = grouping::load_checkpoint(dir);
        bank = st.bank;
        sim = grouping::grouping_config_from_json(
                  nlohmann::json::parse(std::ifstream(dir / "config.json")).at("config"))
                  .sim;
        const rl::Policy* p = policy_covering(bank, trace_task);
        if (!p) throw ConfigError("no policy in the bank covers " + trace_task);
        controller = [p, rng = std::mt19937_64(0)](const netsim::StateVector& s) mutable {
          return rl::act(*p, s, rl::ActMode::deterministic, rng);
        };
      }
      write_trace(trace_out, controller, *it->second, sim, trace_steps, trace_seed);
      return 0;
    }

    if (*report_cmd) {
      std::vector<fs::path> roots(report_roots.begin(), report_roots.end());
      const auto rep = make_report(roots, report_out);
      std::printf("%zu runs -> %s, %s\n", rep.runs.size(), rep.report_csv.string().c_str(),
                  rep.summary_csv.string().c_str());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const MissingInput& e) {
    std::fprintf(stderr, "missing input: %s\n", e.what());
    return kExitMissing;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    if (!current_run.empty())
      std::fprintf(stderr, "checkpoint: %s (rerun with --resume)\n", current_run.string().c_str());
    return kExitRuntime;
  }
  return 0;
}
