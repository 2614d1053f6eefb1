#include "experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace taskbank::cli {

namespace {

const std::set<std::string> kMethods{"fp", "ar", "ts", "kt", "pr", "bg"};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MissingInput("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << text;
  }
  fs::rename(tmp, p);
}

std::string schema_line(const std::string& hash) {
  return "# schema=" + std::to_string(kSchema) + " config_hash=" + hash + "\n";
}

nlohmann::json::json_pointer pointer_for(const std::string& dotted) {
  std::string p = "/" + dotted;
  std::replace(p.begin(), p.end(), '.', '/');
  return nlohmann::json::json_pointer(p);
}

void flatten(const nlohmann::json& j, const std::string& prefix,
             std::vector<std::pair<std::string, nlohmann::json>>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else {
    out.emplace_back(prefix, j);
  }
}

std::string threshold_tag(const std::string& t) {
  std::string s = t;
  std::replace(s.begin(), s.end(), ':', '-');
  return s;
}

bool learning_method(const std::string& m) { return m == "ts" || m == "kt" || m == "pr" || m == "bg"; }

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string fmt(double v) { return metrics::format_double(v); }

}  // namespace

nlohmann::json default_config_json() {
  grouping::GroupingConfig g;
  nlohmann::json doc = grouping::to_json(g);
  doc["scorer"]["threshold"] = "auto";
  doc.erase("threshold");
  doc.erase("master_seed");
  doc["method"] = "bg";
  doc["seeds"] = {0, 1, 2, 3, 4};
  doc["tasks"] = "";
  doc["out"] = "";
  doc["jobs"] = 1;
  doc["curves"] = true;
  return doc;
}

void apply_desk_preset(nlohmann::json& doc) {
  doc["sim"]["ticks_per_step"] = 20;
  doc["sim"]["warmup_ticks"] = 300;
  doc["ppo"]["total_env_steps"] = 20000;
}

void set_dotted(nlohmann::json& doc, const std::string& key, const nlohmann::json& value) {
  const auto ptr = pointer_for(key);
  if (key.empty() || !doc.contains(ptr) || doc.at(ptr).is_object())
    throw ConfigError("unknown config key: " + key);
  auto& slot = doc.at(ptr);
  // Keep numbers numeric when given as strings on the command line.
  if (value.is_string() && slot.is_number()) {
    try {
      slot = nlohmann::json::parse(value.get<std::string>());
      return;
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key " + key + " needs a number");
    }
  }
  slot = value;
}

void merge_config_file(nlohmann::json& doc, const fs::path& file) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(file));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + file.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  std::vector<std::pair<std::string, nlohmann::json>> pairs;
  flatten(j, "", pairs);
  for (const auto& [k, v] : pairs) set_dotted(doc, k, v);
}

void apply_assignment(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got " + assignment);
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  set_dotted(doc, key, value);
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  ExperimentConfig c;
  try {
    c.method = doc.at("method").get<std::string>();
    if (!kMethods.count(c.method)) throw ConfigError("unknown method " + c.method);
    c.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    if (c.seeds.empty()) throw ConfigError("seed list is empty");
    c.tasks_path = doc.at("tasks").get<std::string>();
    const std::string out = doc.at("out").get<std::string>();
    c.out_dir = out.empty() ? default_out_root() : fs::path(out);
    c.curves = doc.at("curves").get<bool>();
    const auto& thr = doc.at("/scorer/threshold"_json_pointer);
    c.threshold = thr.is_string() ? thr.get<std::string>() : metrics::format_double(thr.get<double>());

    nlohmann::json g = doc;
    g["threshold"] = 0.0;
    c.grouping = grouping::grouping_config_from_json(g);
    c.grouping.jobs = doc.at("jobs").get<int>();
    if (c.method == "bg") c.grouping.scorer.kind = compat::ScorerKind::binseg;
    if (c.method == "pr") c.grouping.scorer.kind = compat::ScorerKind::pearson;
    if (c.method == "kt") c.grouping.scorer.kind = compat::ScorerKind::kpi_threshold;
    c.grouping.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  const auto& t = c.threshold;
  if (learning_method(c.method) && c.method != "ts" && t != "auto" && t != "auto:loose" &&
      t != "auto:tight" && t != "inf" && t != "-inf") {
    char* end = nullptr;
    std::strtod(t.c_str(), &end);
    if (t.empty() || *end != '\0') throw ConfigError("threshold must be a number, inf, -inf or auto[:loose|:tight]");
  }
  return c;
}

std::vector<netsim::TrafficTask> load_tasks(const fs::path& file) {
  if (file.empty()) throw ConfigError("no task file given (--tasks)");
  if (!fs::exists(file)) throw MissingInput("task file not found: " + file.string());
  try {
    return netsim::tasks_from_json(nlohmann::json::parse(read_text(file)));
  } catch (const MissingInput&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("task file " + file.string() + ": " + e.what());
  }
}

fs::path default_out_root() {
  if (const char* env = std::getenv("TASKBANK_OUT"); env && *env) return env;
  return "taskbank_out";
}

std::string run_label(const ExperimentConfig& cfg) {
  if (cfg.method == "fp" || cfg.method == "ar") return cfg.method;
  if (cfg.method == "ts") return "ts";
  return cfg.method + "_n" + std::to_string(cfg.grouping.n) + "_k" + std::to_string(cfg.grouping.k) +
         "_" + threshold_tag(cfg.threshold);
}

fs::path run_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
  return cfg.out_dir / run_label(cfg) / ("seed_" + std::to_string(seed));
}

grouping::GroupingConfig seed_config(const ExperimentConfig& cfg, std::size_t n_tasks,
                                     std::uint64_t seed) {
  auto g = cfg.grouping;
  g.master_seed = seed;
  if (cfg.method == "ts") {
    g.n = n_tasks;
    g.threshold = -grouping::kInf;
  }
  return g;
}

void write_result(const fs::path& dir, const metrics::EvalResult& r, const std::string& hash) {
  std::ostringstream report, per;
  report << schema_line(hash);
  metrics::write_report_header(report);
  metrics::append_report_row(report, r);
  per << schema_line(hash);
  metrics::write_per_task(per, r);
  write_text(dir / "per_task.csv", per.str());
  write_text(dir / "result.csv", report.str());
}

std::vector<CurvePoint> curve_from_log(const std::vector<grouping::IterationLog>& log) {
  std::vector<CurvePoint> pts{{0, 0, std::numeric_limits<double>::quiet_NaN()}};
  for (const auto& l : log) {
    CurvePoint p = pts.back();
    p.tasks_processed += l.tasks_sampled;
    p.num_trained += l.num_trained;
    p.rho = l.rho;
    pts.push_back(p);
  }
  return pts;
}

void write_curves(const fs::path& file, const std::vector<CurvePoint>& pts, const std::string& hash) {
  std::ostringstream os;
  os << schema_line(hash) << "tasks_processed,num_trained,rho\n";
  for (const auto& p : pts) os << p.tasks_processed << ',' << p.num_trained << ',' << fmt(p.rho) << '\n';
  write_text(file, os.str());
}

std::vector<CurvePoint> read_curves(const fs::path& file) {
  std::istringstream is(read_text(file));
  std::string line;
  std::vector<CurvePoint> out;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "tasks_processed,num_trained,rho") throw ConfigError("curves.csv: bad header");
      header = true;
      continue;
    }
    CurvePoint p;
    const auto a = line.find(','), b = line.find(',', a + 1);
    p.tasks_processed = std::stoi(line.substr(0, a));
    p.num_trained = std::stoi(line.substr(a + 1, b - a - 1));
    const std::string rho = line.substr(b + 1);
    p.rho = rho.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(rho);
    out.push_back(p);
  }
  return out;
}

int file_schema(const fs::path& file) {
  std::ifstream in(file);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# schema=", 0) != 0) return -1;
  return std::atoi(line.c_str() + 9);
}

SeedRun build_seed(const ExperimentConfig& cfg, const std::vector<netsim::TrafficTask>& tasks,
                   std::uint64_t seed, const grouping::TrainFn& train, bool resume) {
  if (!learning_method(cfg.method)) throw ConfigError("build: use `baseline` for " + cfg.method);
  SeedRun out;
  out.dir = run_dir(cfg, seed);
  fs::create_directories(out.dir);
  auto g = seed_config(cfg, tasks.size(), seed);

  if (cfg.method != "ts") {
    const auto& t = cfg.threshold;
    if (t.rfind("auto", 0) == 0) {
      const fs::path cal = out.dir / "thresholds.json";
      compat::Thresholds th;
      if (resume && fs::exists(cal)) {
        const auto j = nlohmann::json::parse(read_text(cal));
        th = {j.at("default").get<double>(), j.at("loose").get<double>(), j.at("tight").get<double>()};
      } else {
        const auto pilot = grouping::pilot_calibration(tasks, g);
        th = pilot.thresholds;
        write_text(cal, nlohmann::json{{"schema", kSchema},
                                       {"default", th.default_value},
                                       {"loose", th.loose},
                                       {"tight", th.tight},
                                       {"pilot_tasks", pilot.task_ids},
                                       {"num_scores", pilot.scores.size()}}
                            .dump(2));
      }
      out.calibrated = th;
      g.threshold = t == "auto:loose" ? th.loose : t == "auto:tight" ? th.tight : th.default_value;
    } else {
      const double v = t == "inf" ? grouping::kInf : t == "-inf" ? -grouping::kInf : std::stod(t);
      g.threshold = compat::make_scorer(g.scorer)->distance_threshold(v);
    }
  }

  const std::string hash = grouping::config_hash(g);
  nlohmann::json cfg_doc = grouping::to_json(g);
  cfg_doc["method"] = cfg.method;
  cfg_doc["threshold_setting"] = cfg.threshold;
  write_text(out.dir / "config.json",
             nlohmann::json{{"schema", kSchema}, {"config_hash", hash}, {"config", cfg_doc}}.dump(2));

  const auto idx = metrics::index_tasks(tasks);
  const int eval_steps = g.eval_steps;
  grouping::RunOptions opts;
  opts.train = train;
  opts.checkpoint_dir = out.dir;
  opts.resume = resume;
  if (cfg.curves)
    opts.progress_metric = [&](const PolicyBank& bank) {
      return metrics::compute_rho(bank, idx, g.sim, eval_steps, seed, g.jobs).rho;
    };
  const auto st = grouping::run(tasks, g, opts);
  if (!st.done()) throw std::runtime_error("run stopped early");

  const auto rho = metrics::compute_rho(st.bank, idx, g.sim, eval_steps, seed, g.jobs);
  auto& r = out.result;
  r.method = cfg.method;
  r.seed = seed;
  r.n = g.n;
  r.threshold = g.threshold;
  r.rho = rho.rho;
  r.per_task = rho.per_task;
  r.w_steps = st.bank.w_steps;
  r.xi = metrics::compute_xi(r.rho, r.w_steps);
  for (const auto& l : st.log) r.num_trained += l.num_trained;
  write_result(out.dir, r, hash);
  if (cfg.curves) write_curves(out.dir / "curves.csv", curve_from_log(st.log), hash);
  return out;
}

SeedRun baseline_seed(const ExperimentConfig& cfg, const std::vector<netsim::TrafficTask>& tasks,
                      std::uint64_t seed) {
  if (cfg.method != "fp" && cfg.method != "ar") throw ConfigError("baseline: method must be fp or ar");
  SeedRun out;
  out.dir = run_dir(cfg, seed);
  auto g = cfg.grouping;
  g.master_seed = seed;
  out.result = metrics::baseline_result(cfg.method, tasks, g.sim, g.eval_steps, seed, g.jobs);
  const nlohmann::json doc = {{"method", cfg.method}, {"sim", netsim::to_json(g.sim)},
                              {"eval_steps", g.eval_steps}, {"seed", seed}};
  const std::string hash = grouping::config_hash(g);
  fs::create_directories(out.dir);
  write_text(out.dir / "config.json",
             nlohmann::json{{"schema", kSchema}, {"config_hash", hash}, {"config", doc}}.dump(2));
  write_result(out.dir, out.result, hash);
  return out;
}

metrics::EvalResult eval_run(const fs::path& dir, const std::vector<netsim::TrafficTask>& tasks,
                             std::uint64_t seed, int eval_steps, int jobs) {
  if (!fs::exists(dir / "bank.json")) throw MissingInput("no bank.json in " + dir.string());
  const auto st = grouping::load_checkpoint(dir);
  const auto cfg_doc = nlohmann::json::parse(read_text(dir / "config.json"));
  const auto g = grouping::grouping_config_from_json(cfg_doc.at("config"));
  const auto idx = metrics::index_tasks(tasks);
  const auto rho = metrics::compute_rho(st.bank, idx, g.sim, eval_steps, seed, jobs);
  metrics::EvalResult r;
  r.method = cfg_doc.at("config").value("method", "bank");
  r.seed = seed;
  r.n = g.n;
  r.threshold = g.threshold;
  r.rho = rho.rho;
  r.per_task = rho.per_task;
  r.w_steps = st.bank.w_steps;
  r.xi = metrics::compute_xi(r.rho, r.w_steps);
  for (const auto& l : st.log) r.num_trained += l.num_trained;
  return r;
}

void write_trace(const fs::path& file, const rl::Controller& controller,
                 const netsim::TrafficTask& task, const netsim::SimConfig& sim_cfg, int steps,
                 std::uint64_t seed) {
  netsim::Simulator sim(sim_cfg, task);
  auto state = sim.reset(seed);
  const int n = sim_cfg.n_cells;
  std::ostringstream os;
  os << "step,reward";
  for (const char* block : {"active_", "util_", "thr_"})
    for (int c = 0; c < n; ++c) os << ',' << block << c;
  os << '\n';
  for (int t = 0; t < steps; ++t) {
    const auto res = sim.step(controller(state));
    os << t << ',' << fmt(res.reward);
    for (double v : res.state.flatten()) os << ',' << fmt(v);
    os << '\n';
    state = res.state;
  }
  write_text(file, os.str());
}

std::string svg_line_chart(const std::string& title, const std::string& xlabel,
                           const std::string& ylabel, const std::vector<std::string>& names,
                           const std::vector<std::vector<double>>& xs,
                           const std::vector<std::vector<double>>& ys) {
  const double W = 640, H = 420, L = 70, R = 170, T = 40, B = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (std::size_t s = 0; s < xs.size(); ++s)
    for (std::size_t i = 0; i < xs[s].size(); ++i) {
      if (!std::isfinite(ys[s][i])) continue;
      x0 = std::min(x0, xs[s][i]);
      x1 = std::max(x1, xs[s][i]);
      y0 = std::min(y0, ys[s][i]);
      y1 = std::max(y1, ys[s][i]);
    }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

  std::ostringstream os;
  char buf[128];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
    std::snprintf(buf, sizeof buf, "%.4g", xv);
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">" << buf << "</text>\n";
    std::snprintf(buf, sizeof buf, "%.4g", yv);
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << buf << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << "</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
     << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";
  for (std::size_t s = 0; s < xs.size(); ++s) {
    const char* color = colors[s % 8];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs[s].size(); ++i)
      if (std::isfinite(ys[s][i])) os << px(xs[s][i]) << ',' << py(ys[s][i]) << ' ';
    os << "\"/>\n";
    const double ly = T + 16 * static_cast<double>(s) + 8;
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << names[s] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

ReportSummary make_report(const std::vector<fs::path>& roots, const fs::path& out) {
  // A run directory is any directory holding bank.json or result.csv.
  std::vector<fs::path> dirs;
  std::vector<std::string> missing;
  for (const auto& root : roots) {
    if (!fs::exists(root)) {
      missing.push_back(root.string());
      continue;
    }
    std::vector<fs::path> candidates{root};
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_directory()) candidates.push_back(e.path());
    for (const auto& d : candidates) {
      const bool has_result = fs::exists(d / "result.csv");
      if (has_result) dirs.push_back(d);
      else if (fs::exists(d / "config.json") && d.filename().string().rfind("seed_", 0) == 0)
        missing.push_back(d.string() + " (no result.csv)");
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing runs:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw MissingInput(msg);
  }
  if (dirs.empty()) throw MissingInput("no run directories found");
  std::sort(dirs.begin(), dirs.end());

  ReportSummary rep;
  int schema = -2;
  for (const auto& d : dirs) {
    for (const char* f : {"result.csv", "per_task.csv", "curves.csv"}) {
      if (!fs::exists(d / f)) continue;
      const int s = file_schema(d / f);
      if (schema == -2) schema = s;
      if (s != schema || s != kSchema)
        throw ConfigError("mixed or unsupported schema in " + (d / f).string());
    }
    std::istringstream is(read_text(d / "result.csv"));
    auto rows = metrics::read_report(is);
    if (rows.size() != 1) throw ConfigError("result.csv must hold one row: " + d.string());
    std::istringstream pt(read_text(d / "per_task.csv"));
    rows[0].per_task = metrics::read_per_task(pt);
    rep.runs.push_back(rows[0]);
    rep.groups.push_back(d.parent_path().filename().string());
  }

  fs::create_directories(out);
  std::ostringstream report;
  report << "# schema=" << kSchema << "\n";
  metrics::write_report_header(report);
  for (const auto& r : rep.runs) metrics::append_report_row(report, r);
  rep.report_csv = out / "report.csv";
  write_text(rep.report_csv, report.str());

  std::map<std::string, std::vector<std::size_t>> by_group;
  for (std::size_t i = 0; i < rep.runs.size(); ++i) by_group[rep.groups[i]].push_back(i);
  std::ostringstream summary;
  summary << "# schema=" << kSchema << "\n"
          << "group,method,n,threshold,runs,rho_mean,rho_std,xi_mean,xi_std,w_steps_mean,num_trained_mean,num_trained_std\n";
  for (const auto& [group, idxs] : by_group) {
    std::vector<double> rho, xi, w, trained, thr;
    for (auto i : idxs) {
      const auto& r = rep.runs[i];
      rho.push_back(r.rho);
      if (!std::isnan(r.xi)) xi.push_back(r.xi);
      w.push_back(static_cast<double>(r.w_steps));
      trained.push_back(r.num_trained);
      thr.push_back(r.threshold);
    }
    const auto& first = rep.runs[idxs.front()];
    summary << group << ',' << first.method << ',' << first.n << ',' << fmt(mean_of(thr)) << ','
            << idxs.size() << ',' << fmt(mean_of(rho)) << ',' << fmt(sample_std(rho)) << ','
            << (xi.empty() ? "" : fmt(mean_of(xi))) << ',' << (xi.empty() ? "" : fmt(sample_std(xi))) << ','
            << fmt(mean_of(w)) << ',' << fmt(mean_of(trained)) << ',' << fmt(sample_std(trained)) << '\n';
  }
  rep.summary_csv = out / "summary.csv";
  write_text(rep.summary_csv, summary.str());

  // Mean curves per group, indexed by iteration.
  std::ostringstream curves;
  curves << "# schema=" << kSchema << "\n" << "group,tasks_processed,num_trained,rho\n";
  std::vector<std::string> names;
  std::vector<std::vector<double>> xs, trained_ys, rho_ys;
  for (const auto& [group, idxs] : by_group) {
    std::vector<std::vector<CurvePoint>> per_seed;
    for (auto i : idxs) {
      const fs::path f = dirs[i] / "curves.csv";
      if (fs::exists(f)) per_seed.push_back(read_curves(f));
    }
    if (per_seed.empty()) continue;
    std::size_t len = per_seed[0].size();
    for (const auto& c : per_seed) len = std::min(len, c.size());
    names.push_back(group);
    xs.emplace_back();
    trained_ys.emplace_back();
    rho_ys.emplace_back();
    for (std::size_t it = 0; it < len; ++it) {
      std::vector<double> tp, nt, rh;
      for (const auto& c : per_seed) {
        tp.push_back(c[it].tasks_processed);
        nt.push_back(c[it].num_trained);
        rh.push_back(c[it].rho);
      }
      const double rho_mean = std::isnan(rh[0]) ? std::numeric_limits<double>::quiet_NaN() : mean_of(rh);
      curves << group << ',' << fmt(mean_of(tp)) << ',' << fmt(mean_of(nt)) << ',' << fmt(rho_mean) << '\n';
      xs.back().push_back(mean_of(tp));
      trained_ys.back().push_back(mean_of(nt));
      rho_ys.back().push_back(rho_mean);
    }
  }
  rep.curves_csv = out / "curves.csv";
  write_text(rep.curves_csv, curves.str());
  if (!names.empty()) {
    rep.plots = {out / "trained.svg", out / "performance.svg"};
    write_text(rep.plots[0], svg_line_chart("Trained tasks", "Tasks processed", "Number of trained tasks",
                                            names, xs, trained_ys));
    write_text(rep.plots[1], svg_line_chart("Performance", "Tasks processed",
                                            "Performance on processed tasks", names, xs, rho_ys));
  }
  return rep;
}

}  // namespace taskbank::cli
