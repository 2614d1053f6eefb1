#pragma once

// Single-sector cellular load-balancing simulator.
//
// N co-located cells on distinct carriers share one sector. UEs arrive per
// cell following a sinusoidally modulated Poisson process, camp while idle,
// become active to download a file, and then either leave or return to idle.
// Idle UEs follow the reselection rule and active UEs the handover rule,
// both parameterised by the control action. Radio conditions are static per
// UE (log-distance path loss plus a fixed shadowing draw per cell), so every
// RSRP and achievable rate is computed once at spawn.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace taskbank::netsim {

inline constexpr double kAlphaMin = -6.0;
inline constexpr double kAlphaMax = 6.0;
inline constexpr double kThresholdMin = -110.0;  // beta / lambda, dBm
inline constexpr double kThresholdMax = -80.0;

struct SimConfig {
  int n_cells = 4;
  std::vector<double> carrier_freqs_mhz{800.0, 1800.0, 2100.0, 2600.0};
  std::vector<double> bandwidths_mhz{10.0, 15.0, 20.0, 20.0};
  // Effective reference-signal power including antenna gain, chosen so that
  // RSRP over the coverage ring spans the beta/lambda control range.
  std::vector<double> tx_power_dbm{86.0, 93.0, 94.4, 96.2};
  double hysteresis_db = 2.0;
  double pathloss_exponent = 3.5;
  double pathloss_ref_db = 32.0;
  double shadow_sigma_db = 6.0;
  double noise_floor_dbm = -120.0;
  std::vector<double> interference_floor_dbm{-101.0, -103.0, -104.0, -105.0};
  double min_distance_m = 35.0;
  double max_distance_m = 500.0;
  double max_sinr_db = 20.0;
  // Arrivals are blocked while the sector holds this many UEs.
  int max_ues = 600;
  double tick_s = 1.0;
  int ticks_per_step = 60;
  int episode_steps = 240;
  int warmup_ticks = 600;
  double chi_mbps = 1.0;
  std::array<double, 4> phi{0.25, 0.25, 0.25, 0.25};
  // G_avg and G_min are divided by this before weighting.
  double throughput_scale_mbps = 10.0;

  // Throws std::invalid_argument on the first violated invariant.
  void validate() const;
  double episode_duration_s() const {
    return tick_s * ticks_per_step * episode_steps;
  }
  int state_dim() const { return 3 * n_cells; }
  int action_dim() const { return n_cells * (n_cells - 1) + 2 * n_cells; }
};

struct CellTraffic {
  double base_rate = 0.5;  // UEs per second
  double amplitude = 0.0;  // relative modulation depth, [0, 1)
  double phase_s = 0.0;
  double period_s = 14400.0;

  double rate_at(double t_s) const;
};

struct TrafficTask {
  std::string task_id;
  int archetype = -1;  // generator label, -1 when unknown
  std::vector<CellTraffic> cells;
  double mean_file_size_mb = 4.0;
  double idle_dwell_mean_s = 30.0;
  double p_depart_after_service = 0.7;
  std::uint64_t seed = 0;

  void validate(int n_cells) const;
};

enum class UeMode { idle, active };

struct Ue {
  std::uint64_t id = 0;
  double x_m = 0.0;
  double y_m = 0.0;
  std::vector<double> shadow_db;  // fixed at spawn, one entry per cell
  std::vector<double> rsrp_dbm;   // cache of rsrp() per cell
  std::vector<double> full_rate_mbps;  // BW * log2(1 + SINR) per cell
  UeMode mode = UeMode::idle;
  int cell = 0;  // camped cell when idle, serving cell when active
  double remaining_bits = 0.0;
  double idle_timer_s = 0.0;

  double distance_m() const;
};

// Load-balancing thresholds. alpha is indexed [i * n + j] for the i -> j
// handover offset (diagonal unused); beta and lambda are per cell.
struct ActionParams {
  int n_cells = 0;
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> lambda;

  static ActionParams uniform(int n_cells, double alpha, double beta,
                              double lambda);
  double& alpha_at(int i, int j) { return alpha[i * n_cells + j]; }
  double alpha_at(int i, int j) const { return alpha[i * n_cells + j]; }

  // Flat layout: off-diagonal alpha row-major, then beta, then lambda.
  std::vector<double> to_vector() const;
  static ActionParams from_vector(int n_cells, std::span<const double> v);
  static std::vector<double> lower_bounds(int n_cells);
  static std::vector<double> upper_bounds(int n_cells);

  bool within_bounds() const;
  // Returns true when any entry had to be clamped.
  bool clamp_to_bounds();
};

struct StateVector {
  std::vector<double> active_ues;
  std::vector<double> utilization;
  std::vector<double> throughput_mbps;

  static StateVector zeros(int n_cells);
  std::vector<double> flatten() const;
  static StateVector unflatten(int n_cells, std::span<const double> v);
};

struct KpiSet {
  double g_min = 0.0;
  double g_avg = 0.0;
  double g_sd = 0.0;
  int g_below_chi = 0;
};

KpiSet kpis(std::span<const double> throughput, double chi);

struct RewardScale {
  double avg = 1.0;
  double min = 1.0;
};

double reward(const KpiSet& k, const std::array<double, 4>& phi, int n_cells,
              RewardScale scale = {});

double rsrp(const Ue& ue, int cell, const SimConfig& cfg);

// Rule evaluation against cached RSRP values. Ties resolve to the lowest
// cell index.
std::optional<int> try_handover(const Ue& ue, const ActionParams& action,
                                const SimConfig& cfg);
std::optional<int> try_reselect(const Ue& ue, const ActionParams& action,
                                const SimConfig& cfg);

struct TickStats {
  int arrivals = 0;  // admitted only
  int blocked = 0;
  int departures = 0;
  int activations = 0;
  int handovers = 0;
  int reselections = 0;
  std::size_t ues_before = 0;
  std::size_t ues_after = 0;
  std::vector<int> active_per_cell;
  std::vector<double> utilization;
  std::vector<double> throughput_mbps;  // mean allocated rate per active UE
};

struct StepResult {
  StateVector state;
  KpiSet kpis;
  double reward = 0.0;
  bool action_clamped = false;
  int handovers = 0;
  int reselections = 0;
};

class Simulator {
 public:
  Simulator(SimConfig cfg, TrafficTask task);

  // Empties the sector, reseeds, and runs the warm-up ticks under the
  // default action. The clock reads 0 at the first control step. Returns the
  // state averaged over the last control-step-worth of warm-up ticks (zeros
  // when there is no warm-up).
  StateVector reset(std::uint64_t episode_seed);
  StepResult step(const ActionParams& action);
  TickStats tick(const ActionParams& action);

  const SimConfig& config() const { return cfg_; }
  const TrafficTask& task() const { return task_; }
  std::span<const Ue> ues() const { return ues_; }
  double time_s() const { return time_s_; }

  // Inserts a UE directly; used by tests to build hand-crafted scenes.
  Ue& add_ue(double x_m, double y_m, std::vector<double> shadow_db, int cell,
             UeMode mode);
  void refresh_radio(Ue& ue) const;

 private:
  Ue spawn(int cell);
  // Runs `ticks` ticks and averages them into a step-level result.
  StepResult run_ticks(const ActionParams& action, int ticks);

  SimConfig cfg_;
  TrafficTask task_;
  std::mt19937_64 rng_;
  std::vector<Ue> ues_;
  std::vector<double> noise_mw_;  // noise + interference per cell
  std::uint64_t next_id_ = 0;
  double time_s_ = 0.0;
};

// Constant operating point used by the fixed-parameter baseline and the
// warm-up phase.
ActionParams default_action(int n_cells);

struct TaskGenOptions {
  int count = 32;
  int n_archetypes = 8;
  std::uint64_t seed = 0;
  double rate_jitter = 0.10;   // relative, uniform in [-j, +j]
  double phase_jitter = 0.05;  // fraction of the period, uniform in [-j, +j]
  double period_s = 14400.0;
};

std::vector<TrafficTask> generate_tasks(const TaskGenOptions& opts);

nlohmann::json to_json(const TrafficTask& task);
TrafficTask task_from_json(const nlohmann::json& j);
nlohmann::json tasks_to_json(const std::vector<TrafficTask>& tasks);
std::vector<TrafficTask> tasks_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const nlohmann::json& j);

}  // namespace taskbank::netsim
