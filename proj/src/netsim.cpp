#include "taskbank/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "taskbank/seeding.hpp"

namespace taskbank::netsim {

namespace {

double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void SimConfig::validate() const {
  require(n_cells >= 2, "n_cells must be >= 2");
  const auto n = static_cast<std::size_t>(n_cells);
  require(carrier_freqs_mhz.size() == n, "carrier_freqs_mhz size != n_cells");
  require(bandwidths_mhz.size() == n, "bandwidths_mhz size != n_cells");
  require(tx_power_dbm.size() == n, "tx_power_dbm size != n_cells");
  require(interference_floor_dbm.size() == n,
          "interference_floor_dbm size != n_cells");
  for (double bw : bandwidths_mhz) require(bw > 0.0, "bandwidth must be > 0");
  for (double f : carrier_freqs_mhz) require(f > 0.0, "carrier must be > 0");
  require(min_distance_m > 0.0 && max_distance_m >= min_distance_m,
          "invalid cell radius bounds");
  require(tick_s > 0.0, "tick_s must be > 0");
  require(ticks_per_step >= 1, "ticks_per_step must be >= 1");
  require(episode_steps >= 1, "episode_steps must be >= 1");
  require(warmup_ticks >= 0, "warmup_ticks must be >= 0");
  require(max_ues >= 1, "max_ues must be >= 1");
  for (double p : phi) require(p >= 0.0, "phi entries must be >= 0");
  require(throughput_scale_mbps > 0.0, "throughput_scale_mbps must be > 0");
}

double CellTraffic::rate_at(double t_s) const {
  const double w = 2.0 * std::numbers::pi * (t_s + phase_s) / period_s;
  return std::max(0.0, base_rate * (1.0 + amplitude * std::sin(w)));
}

void TrafficTask::validate(int n_cells) const {
  require(cells.size() == static_cast<std::size_t>(n_cells),
          "task cell count != n_cells");
  for (const auto& c : cells) {
    require(c.base_rate >= 0.0, "base_rate must be >= 0");
    require(c.amplitude >= 0.0 && c.amplitude < 1.0,
            "amplitude must be in [0, 1)");
    require(c.period_s > 0.0, "period must be > 0");
  }
  require(mean_file_size_mb > 0.0, "mean_file_size_mb must be > 0");
  require(idle_dwell_mean_s > 0.0, "idle_dwell_mean_s must be > 0");
  require(p_depart_after_service >= 0.0 && p_depart_after_service <= 1.0,
          "p_depart_after_service must be in [0, 1]");
}

double Ue::distance_m() const { return std::hypot(x_m, y_m); }

ActionParams ActionParams::uniform(int n_cells, double alpha, double beta,
                                   double lambda) {
  ActionParams a;
  a.n_cells = n_cells;
  a.alpha.assign(static_cast<std::size_t>(n_cells * n_cells), alpha);
  for (int i = 0; i < n_cells; ++i) a.alpha_at(i, i) = 0.0;
  a.beta.assign(static_cast<std::size_t>(n_cells), beta);
  a.lambda.assign(static_cast<std::size_t>(n_cells), lambda);
  return a;
}

std::vector<double> ActionParams::to_vector() const {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(n_cells * (n_cells - 1) + 2 * n_cells));
  for (int i = 0; i < n_cells; ++i)
    for (int j = 0; j < n_cells; ++j)
      if (i != j) v.push_back(alpha_at(i, j));
  v.insert(v.end(), beta.begin(), beta.end());
  v.insert(v.end(), lambda.begin(), lambda.end());
  return v;
}

ActionParams ActionParams::from_vector(int n_cells, std::span<const double> v) {
  const auto pairs = static_cast<std::size_t>(n_cells * (n_cells - 1));
  if (v.size() != pairs + 2 * static_cast<std::size_t>(n_cells))
    throw std::invalid_argument("action vector has wrong dimension");
  ActionParams a = uniform(n_cells, 0.0, 0.0, 0.0);
  std::size_t k = 0;
  for (int i = 0; i < n_cells; ++i)
    for (int j = 0; j < n_cells; ++j)
      if (i != j) a.alpha_at(i, j) = v[k++];
  for (int i = 0; i < n_cells; ++i) a.beta[i] = v[k++];
  for (int i = 0; i < n_cells; ++i) a.lambda[i] = v[k++];
  return a;
}

std::vector<double> ActionParams::lower_bounds(int n_cells) {
  return uniform(n_cells, kAlphaMin, kThresholdMin, kThresholdMin).to_vector();
}

std::vector<double> ActionParams::upper_bounds(int n_cells) {
  return uniform(n_cells, kAlphaMax, kThresholdMax, kThresholdMax).to_vector();
}

bool ActionParams::within_bounds() const {
  auto in = [](double x, double lo, double hi) {
    return std::isfinite(x) && x >= lo && x <= hi;
  };
  for (int i = 0; i < n_cells; ++i)
    for (int j = 0; j < n_cells; ++j)
      if (i != j && !in(alpha_at(i, j), kAlphaMin, kAlphaMax)) return false;
  for (double b : beta)
    if (!in(b, kThresholdMin, kThresholdMax)) return false;
  for (double l : lambda)
    if (!in(l, kThresholdMin, kThresholdMax)) return false;
  return true;
}

bool ActionParams::clamp_to_bounds() {
  bool clamped = false;
  auto fix = [&clamped](double& x, double lo, double hi) {
    double y = std::isnan(x) ? 0.5 * (lo + hi) : std::clamp(x, lo, hi);
    if (y != x) clamped = true;
    x = y;
  };
  for (int i = 0; i < n_cells; ++i)
    for (int j = 0; j < n_cells; ++j)
      if (i != j) fix(alpha_at(i, j), kAlphaMin, kAlphaMax);
  for (double& b : beta) fix(b, kThresholdMin, kThresholdMax);
  for (double& l : lambda) fix(l, kThresholdMin, kThresholdMax);
  return clamped;
}

StateVector StateVector::zeros(int n_cells) {
  const auto n = static_cast<std::size_t>(n_cells);
  return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
          std::vector<double>(n, 0.0)};
}

std::vector<double> StateVector::flatten() const {
  std::vector<double> v;
  v.reserve(active_ues.size() * 3);
  v.insert(v.end(), active_ues.begin(), active_ues.end());
  v.insert(v.end(), utilization.begin(), utilization.end());
  v.insert(v.end(), throughput_mbps.begin(), throughput_mbps.end());
  return v;
}

StateVector StateVector::unflatten(int n_cells, std::span<const double> v) {
  const auto n = static_cast<std::size_t>(n_cells);
  if (v.size() != 3 * n)
    throw std::invalid_argument("state vector has wrong dimension");
  StateVector s;
  s.active_ues.assign(v.begin(), v.begin() + n);
  s.utilization.assign(v.begin() + n, v.begin() + 2 * n);
  s.throughput_mbps.assign(v.begin() + 2 * n, v.end());
  return s;
}

KpiSet kpis(std::span<const double> x, double chi) {
  if (x.empty()) throw std::invalid_argument("kpis: empty throughput vector");
  const double n = static_cast<double>(x.size());
  KpiSet k;
  k.g_min = *std::min_element(x.begin(), x.end());
  k.g_avg = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double xi : x) ss += (xi - k.g_avg) * (xi - k.g_avg);
  k.g_sd = std::sqrt(ss / n);
  k.g_below_chi = static_cast<int>(
      std::count_if(x.begin(), x.end(), [chi](double xi) { return xi < chi; }));
  return k;
}

double reward(const KpiSet& k, const std::array<double, 4>& phi, int n_cells,
              RewardScale scale) {
  return phi[0] * k.g_avg / scale.avg + phi[1] * k.g_min / scale.min +
         phi[2] / (1.0 + k.g_sd) + phi[3] * (n_cells - k.g_below_chi);
}

double rsrp(const Ue& ue, int cell, const SimConfig& cfg) {
  const double d = ue.distance_m();
  if (!(d > 0.0)) throw std::domain_error("rsrp: UE distance must be > 0");
  const auto c = static_cast<std::size_t>(cell);
  const double pathloss = 20.0 * std::log10(cfg.carrier_freqs_mhz[c]) +
                          10.0 * cfg.pathloss_exponent * std::log10(d) +
                          cfg.pathloss_ref_db;
  return cfg.tx_power_dbm[c] - pathloss + ue.shadow_db[c];
}

std::optional<int> try_handover(const Ue& ue, const ActionParams& action,
                                const SimConfig& cfg) {
  const int i = ue.cell;
  const double serving = ue.rsrp_dbm[i];
  std::optional<int> best;
  for (int j = 0; j < cfg.n_cells; ++j) {
    if (j == i) continue;
    const double target = ue.rsrp_dbm[j];
    if (target > serving + action.alpha_at(i, j) + cfg.hysteresis_db &&
        (!best || target > ue.rsrp_dbm[*best]))
      best = j;
  }
  return best;
}

std::optional<int> try_reselect(const Ue& ue, const ActionParams& action,
                                const SimConfig& cfg) {
  const int i = ue.cell;
  if (!(ue.rsrp_dbm[i] < action.beta[i])) return std::nullopt;
  std::optional<int> best;
  for (int j = 0; j < cfg.n_cells; ++j) {
    if (j == i) continue;
    const double target = ue.rsrp_dbm[j];
    if (target > action.lambda[j] && (!best || target > ue.rsrp_dbm[*best]))
      best = j;
  }
  return best;
}

ActionParams default_action(int n_cells) {
  return ActionParams::uniform(n_cells, 2.0, -100.0, -96.0);
}

Simulator::Simulator(SimConfig cfg, TrafficTask task)
    : cfg_(std::move(cfg)), task_(std::move(task)) {
  cfg_.validate();
  task_.validate(cfg_.n_cells);
  for (int c = 0; c < cfg_.n_cells; ++c)
    noise_mw_.push_back(dbm_to_mw(cfg_.noise_floor_dbm) +
                        dbm_to_mw(cfg_.interference_floor_dbm[c]));
  reset(0);
}

void Simulator::refresh_radio(Ue& ue) const {
  const auto n = static_cast<std::size_t>(cfg_.n_cells);
  ue.rsrp_dbm.resize(n);
  ue.full_rate_mbps.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    ue.rsrp_dbm[c] = rsrp(ue, static_cast<int>(c), cfg_);
    const double sinr_db = std::min(
        cfg_.max_sinr_db, ue.rsrp_dbm[c] - 10.0 * std::log10(noise_mw_[c]));
    ue.full_rate_mbps[c] =
        cfg_.bandwidths_mhz[c] * std::log2(1.0 + std::pow(10.0, sinr_db / 10.0));
  }
}

Ue& Simulator::add_ue(double x_m, double y_m, std::vector<double> shadow_db,
                      int cell, UeMode mode) {
  Ue ue;
  ue.id = next_id_++;
  ue.x_m = x_m;
  ue.y_m = y_m;
  ue.shadow_db = std::move(shadow_db);
  ue.cell = cell;
  ue.mode = mode;
  refresh_radio(ue);
  ues_.push_back(std::move(ue));
  return ues_.back();
}

Ue Simulator::spawn(int cell) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double r2min = cfg_.min_distance_m * cfg_.min_distance_m;
  const double r2max = cfg_.max_distance_m * cfg_.max_distance_m;
  const double r = std::sqrt(r2min + unit(rng_) * (r2max - r2min));
  const double theta = (unit(rng_) - 0.5) * (2.0 * std::numbers::pi / 3.0);
  std::normal_distribution<double> shadow(0.0, cfg_.shadow_sigma_db);
  Ue ue;
  ue.id = next_id_++;
  ue.x_m = r * std::cos(theta);
  ue.y_m = r * std::sin(theta);
  ue.shadow_db.resize(static_cast<std::size_t>(cfg_.n_cells));
  for (double& s : ue.shadow_db) s = shadow(rng_);
  ue.cell = cell;
  ue.mode = UeMode::idle;
  std::exponential_distribution<double> dwell(1.0 / task_.idle_dwell_mean_s);
  ue.idle_timer_s = dwell(rng_);
  refresh_radio(ue);
  return ue;
}

StateVector Simulator::reset(std::uint64_t episode_seed) {
  rng_.seed(derive_seed(task_.seed, episode_seed));
  ues_.clear();
  next_id_ = 0;
  time_s_ = -cfg_.tick_s * cfg_.warmup_ticks;
  const ActionParams warm = default_action(cfg_.n_cells);
  const int tail = std::min(cfg_.warmup_ticks, cfg_.ticks_per_step);
  for (int t = 0; t < cfg_.warmup_ticks - tail; ++t) tick(warm);
  if (tail == 0) return StateVector::zeros(cfg_.n_cells);
  return run_ticks(warm, tail).state;
}

TickStats Simulator::tick(const ActionParams& action) {
  const int n = cfg_.n_cells;
  const double dt = cfg_.tick_s;
  TickStats st;
  st.ues_before = ues_.size();
  st.active_per_cell.assign(static_cast<std::size_t>(n), 0);
  st.utilization.assign(static_cast<std::size_t>(n), 0.0);
  st.throughput_mbps.assign(static_cast<std::size_t>(n), 0.0);

  for (int c = 0; c < n; ++c) {
    const double mean = task_.cells[c].rate_at(time_s_) * dt;
    if (mean <= 0.0) continue;
    std::poisson_distribution<int> arrivals(mean);
    const int k = arrivals(rng_);
    for (int a = 0; a < k; ++a) {
      if (ues_.size() >= static_cast<std::size_t>(cfg_.max_ues)) {
        ++st.blocked;
        continue;
      }
      ues_.push_back(spawn(c));
      ++st.arrivals;
    }
  }

  std::exponential_distribution<double> file_mb(1.0 / task_.mean_file_size_mb);
  for (Ue& ue : ues_) {
    if (ue.mode != UeMode::idle) continue;
    ue.idle_timer_s -= dt;
    if (ue.idle_timer_s <= 0.0) {
      ue.mode = UeMode::active;
      ue.remaining_bits = file_mb(rng_) * 8e6;
      ++st.activations;
    }
  }

  for (const Ue& ue : ues_)
    if (ue.mode == UeMode::active) ++st.active_per_cell[ue.cell];

  // Equal time-frequency share per active UE; leftover share from UEs that
  // finish mid-tick is not redistributed.
  for (Ue& ue : ues_) {
    if (ue.mode != UeMode::active) continue;
    const auto c = static_cast<std::size_t>(ue.cell);
    const double share = 1.0 / st.active_per_cell[c];
    const double full_bits = ue.full_rate_mbps[c] * 1e6 * dt;
    const double served = std::min(ue.remaining_bits, share * full_bits);
    ue.remaining_bits -= served;
    st.utilization[c] += full_bits > 0.0 ? served / full_bits : share;
    st.throughput_mbps[c] += share * ue.full_rate_mbps[c];
  }
  for (int c = 0; c < n; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (st.active_per_cell[ci] > 0) {
      st.throughput_mbps[ci] /= st.active_per_cell[ci];
      st.utilization[ci] = std::min(1.0, st.utilization[ci]);
    }
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> dwell(1.0 / task_.idle_dwell_mean_s);
  std::vector<Ue> kept;
  kept.reserve(ues_.size());
  for (Ue& ue : ues_) {
    if (ue.mode == UeMode::active && ue.remaining_bits <= 0.0) {
      if (unit(rng_) < task_.p_depart_after_service) {
        ++st.departures;
        continue;
      }
      ue.mode = UeMode::idle;
      ue.remaining_bits = 0.0;
      ue.idle_timer_s = dwell(rng_);
    }
    kept.push_back(std::move(ue));
  }
  ues_.swap(kept);

  for (Ue& ue : ues_) {
    if (ue.mode == UeMode::idle) {
      if (auto j = try_reselect(ue, action, cfg_)) {
        ue.cell = *j;
        ++st.reselections;
      }
    } else if (auto j = try_handover(ue, action, cfg_)) {
      ue.cell = *j;
      ++st.handovers;
    }
  }

  st.ues_after = ues_.size();
  time_s_ += dt;
  return st;
}

StepResult Simulator::step(const ActionParams& requested) {
  if (requested.n_cells != cfg_.n_cells)
    throw std::invalid_argument("step: action cell count != n_cells");
  ActionParams action = requested;
  const bool clamped = action.clamp_to_bounds();
  StepResult out = run_ticks(action, cfg_.ticks_per_step);
  out.action_clamped = clamped;
  return out;
}

StepResult Simulator::run_ticks(const ActionParams& action, int ticks) {
  const int n = cfg_.n_cells;
  const auto nn = static_cast<std::size_t>(n);
  StepResult out;
  std::vector<double> active(nn, 0.0), util(nn, 0.0), thr(nn, 0.0);
  std::vector<int> busy_ticks(nn, 0);
  for (int t = 0; t < ticks; ++t) {
    TickStats st = tick(action);
    out.handovers += st.handovers;
    out.reselections += st.reselections;
    for (std::size_t c = 0; c < nn; ++c) {
      active[c] += st.active_per_cell[c];
      util[c] += st.utilization[c];
      if (st.active_per_cell[c] > 0) {
        thr[c] += st.throughput_mbps[c];
        ++busy_ticks[c];
      }
    }
  }
  const double dt = ticks;
  for (std::size_t c = 0; c < nn; ++c) {
    active[c] /= dt;
    util[c] = std::clamp(util[c] / dt, 0.0, 1.0);
    thr[c] = busy_ticks[c] > 0 ? thr[c] / busy_ticks[c] : 0.0;
  }
  out.state = {std::move(active), std::move(util), std::move(thr)};
  out.kpis = kpis(out.state.throughput_mbps, cfg_.chi_mbps);
  out.reward = reward(out.kpis, cfg_.phi, n,
                      {cfg_.throughput_scale_mbps, cfg_.throughput_scale_mbps});
  return out;
}

std::vector<TrafficTask> generate_tasks(const TaskGenOptions& opts) {
  if (opts.count < 1) throw std::invalid_argument("generate_tasks: count < 1");
  if (opts.n_archetypes < 1 || opts.n_archetypes > opts.count)
    throw std::invalid_argument(
        "generate_tasks: need 1 <= n_archetypes <= count");
  constexpr int kCells = 4;
  std::mt19937_64 rng(derive_seed(opts.seed, "tasks"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<CellTraffic>> templates;
  for (int a = 0; a < opts.n_archetypes; ++a) {
    std::vector<CellTraffic> cells(kCells);
    // Hot cell cycles through the cells; each full cycle shifts the load level.
    const int hot = a % kCells;
    const int level = (a / kCells) % 2;
    const double total = (level == 0 ? 1.0 : 1.6) + 0.4 * unit(rng);
    for (int c = 0; c < kCells; ++c) {
      auto& cell = cells[static_cast<std::size_t>(c)];
      const double weight = (c == hot ? 2.5 : 0.5) + unit(rng);
      cell.base_rate = weight;
      cell.amplitude = 0.2 + 0.6 * unit(rng);
      cell.phase_s = unit(rng) * opts.period_s;
      cell.period_s = opts.period_s;
    }
    double wsum = 0.0;
    for (const auto& cell : cells) wsum += cell.base_rate;
    for (auto& cell : cells) cell.base_rate *= total / wsum;
    templates.push_back(std::move(cells));
  }

  std::vector<TrafficTask> tasks;
  for (int i = 0; i < opts.count; ++i) {
    TrafficTask t;
    char id[32];
    std::snprintf(id, sizeof id, "task_%02d", i);
    t.task_id = id;
    t.archetype = i % opts.n_archetypes;
    t.cells = templates[static_cast<std::size_t>(t.archetype)];
    for (auto& cell : t.cells) {
      const double rj = (2.0 * unit(rng) - 1.0) * opts.rate_jitter;
      const double pj = (2.0 * unit(rng) - 1.0) * opts.phase_jitter;
      cell.base_rate *= 1.0 + rj;
      cell.phase_s += pj * opts.period_s;
    }
    t.seed = derive_seed(opts.seed, static_cast<std::uint64_t>(i));
    tasks.push_back(std::move(t));
  }
  return tasks;
}

nlohmann::json to_json(const TrafficTask& task) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : task.cells)
    cells.push_back({{"base_rate", c.base_rate},
                     {"amplitude", c.amplitude},
                     {"phase_s", c.phase_s},
                     {"period_s", c.period_s}});
  return {{"task_id", task.task_id},
          {"archetype", task.archetype},
          {"cells", cells},
          {"mean_file_size_mb", task.mean_file_size_mb},
          {"idle_dwell_mean_s", task.idle_dwell_mean_s},
          {"p_depart_after_service", task.p_depart_after_service},
          {"seed", task.seed}};
}

TrafficTask task_from_json(const nlohmann::json& j) {
  TrafficTask t;
  t.task_id = j.at("task_id").get<std::string>();
  t.archetype = j.value("archetype", -1);
  for (const auto& c : j.at("cells")) {
    CellTraffic cell;
    cell.base_rate = c.at("base_rate").get<double>();
    cell.amplitude = c.at("amplitude").get<double>();
    cell.phase_s = c.at("phase_s").get<double>();
    cell.period_s = c.at("period_s").get<double>();
    t.cells.push_back(cell);
  }
  t.mean_file_size_mb = j.value("mean_file_size_mb", 4.0);
  t.idle_dwell_mean_s = j.value("idle_dwell_mean_s", 30.0);
  t.p_depart_after_service = j.value("p_depart_after_service", 0.7);
  t.seed = j.at("seed").get<std::uint64_t>();
  return t;
}

nlohmann::json tasks_to_json(const std::vector<TrafficTask>& tasks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : tasks) arr.push_back(to_json(t));
  return {{"schema", 1}, {"tasks", arr}};
}

std::vector<TrafficTask> tasks_from_json(const nlohmann::json& j) {
  if (j.value("schema", 0) != 1)
    throw std::invalid_argument("task file: unsupported schema version");
  std::vector<TrafficTask> out;
  for (const auto& t : j.at("tasks")) out.push_back(task_from_json(t));
  return out;
}

nlohmann::json to_json(const SimConfig& c) {
  return {{"n_cells", c.n_cells},
          {"carrier_freqs_mhz", c.carrier_freqs_mhz},
          {"bandwidths_mhz", c.bandwidths_mhz},
          {"tx_power_dbm", c.tx_power_dbm},
          {"hysteresis_db", c.hysteresis_db},
          {"pathloss_exponent", c.pathloss_exponent},
          {"pathloss_ref_db", c.pathloss_ref_db},
          {"shadow_sigma_db", c.shadow_sigma_db},
          {"noise_floor_dbm", c.noise_floor_dbm},
          {"interference_floor_dbm", c.interference_floor_dbm},
          {"min_distance_m", c.min_distance_m},
          {"max_distance_m", c.max_distance_m},
          {"max_sinr_db", c.max_sinr_db},
          {"max_ues", c.max_ues},
          {"tick_s", c.tick_s},
          {"ticks_per_step", c.ticks_per_step},
          {"episode_steps", c.episode_steps},
          {"warmup_ticks", c.warmup_ticks},
          {"chi_mbps", c.chi_mbps},
          {"phi", c.phi},
          {"throughput_scale_mbps", c.throughput_scale_mbps}};
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig c;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("n_cells", c.n_cells);
  get("carrier_freqs_mhz", c.carrier_freqs_mhz);
  get("bandwidths_mhz", c.bandwidths_mhz);
  get("tx_power_dbm", c.tx_power_dbm);
  get("hysteresis_db", c.hysteresis_db);
  get("pathloss_exponent", c.pathloss_exponent);
  get("pathloss_ref_db", c.pathloss_ref_db);
  get("shadow_sigma_db", c.shadow_sigma_db);
  get("noise_floor_dbm", c.noise_floor_dbm);
  get("interference_floor_dbm", c.interference_floor_dbm);
  get("min_distance_m", c.min_distance_m);
  get("max_distance_m", c.max_distance_m);
  get("max_sinr_db", c.max_sinr_db);
  get("max_ues", c.max_ues);
  get("tick_s", c.tick_s);
  get("ticks_per_step", c.ticks_per_step);
  get("episode_steps", c.episode_steps);
  get("warmup_ticks", c.warmup_ticks);
  get("chi_mbps", c.chi_mbps);
  get("phi", c.phi);
  get("throughput_scale_mbps", c.throughput_scale_mbps);
  c.validate();
  return c;
}

}  // namespace taskbank::netsim
