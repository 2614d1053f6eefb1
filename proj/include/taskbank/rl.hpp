#pragma once

// Gaussian MLP policy with a separate value trunk, trained by PPO.
//
// Parameters of the actor, the state-independent log-std vector and the critic
// live in one flat vector so a single optimizer and a single finite-difference
// checker cover all of them. Gradients are written by hand for the fixed
// two-hidden-layer tanh architecture.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskbank/netsim.hpp"

namespace taskbank::rl {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense tanh -> tanh -> linear block stored at `offset` inside a flat vector.
struct Mlp3 {
  int in = 0;
  int hidden = 64;
  int out = 0;
  std::size_t offset = 0;

  std::size_t size() const;

  struct Cache {
    std::vector<double> x, h1, h2;
  };
  void forward(std::span<const double> params, std::span<const double> x,
               Cache& cache, std::span<double> y) const;
  // Accumulates dL/dparams given dL/dy for the sample held in `cache`.
  void backward(std::span<const double> params, const Cache& cache,
                std::span<const double> dy, std::span<double> grad) const;
};

struct NetLayout {
  Mlp3 actor;
  std::size_t log_std_offset = 0;
  Mlp3 critic;
  std::size_t total = 0;

  static NetLayout make(int obs_dim, int act_dim, int hidden = 64);
  int obs_dim() const { return actor.in; }
  int act_dim() const { return actor.out; }
};

// Running mean/variance of raw observations (parallel Welford merge).
struct ObsNormalizer {
  std::vector<double> mean;
  std::vector<double> var;
  double count = 0.0;
  double clip = 10.0;

  static ObsNormalizer identity(int dim);
  void update(std::span<const double> x);
  std::vector<double> normalize(std::span<const double> x) const;
};

struct Provenance {
  std::vector<std::string> trained_task_ids;
  std::vector<std::string> parent_ids;
};

struct Experience {
  std::string task_id;
  std::string policy_id;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> states;  // T rows of 3 * n_cells

  std::size_t length() const { return states.size(); }
  std::size_t dim() const { return states.empty() ? 0 : states[0].size(); }
  std::string key() const;
  // Column `d` as a time series.
  std::vector<double> column(std::size_t d) const;
  void validate() const;
};

struct Policy {
  std::string policy_id;
  NetLayout layout;
  std::vector<double> params;
  ObsNormalizer obs_norm;
  std::vector<double> action_low;
  std::vector<double> action_high;
  Provenance provenance;
  std::vector<Experience> training_experiences;
  double final_eval_reward = 0.0;

  int obs_dim() const { return layout.obs_dim(); }
  int act_dim() const { return layout.act_dim(); }
  std::span<const double> log_std() const;

  // Pre-squash Gaussian mean for a raw (unnormalized) state.
  std::vector<double> mean(std::span<const double> raw_state) const;
  std::vector<double> squash(std::span<const double> u) const;
  // Squashed mean in action units; what deterministic mode emits.
  std::vector<double> deterministic_action(
      std::span<const double> raw_state) const;
  double value(std::span<const double> raw_state) const;
};

Policy make_policy(std::string policy_id, const netsim::SimConfig& cfg,
                   std::uint64_t seed, int hidden = 64,
                   double init_log_std = -0.5);

enum class ActMode { stochastic, deterministic };

struct ActOutput {
  netsim::ActionParams action;
  std::vector<double> pre_squash;
  double log_prob = 0.0;  // of pre_squash under the Gaussian
};

ActOutput act_detailed(const Policy& policy, std::span<const double> raw_state,
                       ActMode mode, std::mt19937_64& rng);
netsim::ActionParams act(const Policy& policy, const netsim::StateVector& s,
                         ActMode mode, std::mt19937_64& rng);

double gaussian_log_prob(std::span<const double> u, std::span<const double> mu,
                         std::span<const double> log_std);

// Transitions in the form the losses consume; observations are already
// normalized.
struct Batch {
  std::vector<std::vector<double>> obs;
  std::vector<std::vector<double>> pre_squash;
  std::vector<double> log_prob_old;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return obs.size(); }
  Batch subset(std::span<const std::size_t> idx) const;
};

struct LossTerms {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

// Clipped surrogate + value regression - entropy bonus, averaged over the
// batch. When `grad` is non-null it receives dL/dparams (overwritten).
LossTerms ppo_loss(const NetLayout& layout, std::span<const double> params,
                   const Batch& batch, double clip_epsilon, double vf_coef,
                   double ent_coef, std::vector<double>* grad);

// -mean(log pi(u|s) * A) + value regression - entropy bonus.
LossTerms vanilla_pg_loss(const NetLayout& layout,
                          std::span<const double> params, const Batch& batch,
                          double vf_coef, double ent_coef,
                          std::vector<double>* grad);

// Generalized advantage estimation. `next_values[t]` is V(s_{t+1}) for the
// transition at t (0 for a true terminal) and `episode_end[t]` marks the last
// transition of an episode, terminal or truncated.
void compute_gae(std::span<const double> rewards, std::span<const double> values,
                 std::span<const double> next_values,
                 std::span<const bool> episode_end, double gamma, double lambda,
                 std::vector<double>& advantages, std::vector<double>& returns);

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_ = 3e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<double> m_, v_;
};

// Scales `grad` in place so its L2 norm is at most max_norm; returns the
// original norm. max_norm <= 0 disables clipping.
double clip_grad_norm(std::span<double> grad, double max_norm);

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  double learning_rate = 3e-4;
  int epochs_per_update = 10;
  int minibatch_size = 64;
  int steps_per_update = 2000;
  long total_env_steps = 200000;
  double vf_coef = 0.5;
  double ent_coef = 0.0;
  double max_grad_norm = 0.5;
  bool normalize_rewards = true;
  int hidden = 64;
  double init_log_std = -0.5;
  int eval_steps = 240;

  void validate() const;
};

nlohmann::json to_json(const PpoConfig& cfg);
PpoConfig ppo_config_from_json(const nlohmann::json& j);

// One optimisation pass over `batch` as PPO does it: `epochs` passes of
// shuffled minibatches (no shuffle when one minibatch covers the batch).
void ppo_update(Policy& policy, Adam& opt, const Batch& batch,
                const PpoConfig& cfg, std::mt19937_64& rng);
// A single full-batch REINFORCE-with-baseline step, same optimizer path.
void vanilla_pg_update(Policy& policy, Adam& opt, const Batch& batch,
                       const PpoConfig& cfg);

struct TrainResult {
  Policy policy;
  long env_steps_used = 0;
  std::vector<double> episode_returns;  // completed training episodes
};

// Trains a fresh policy on `task`. The result's final_eval_reward is the
// deterministic evaluation on the training task with `eval_seed`.
TrainResult train_policy(const netsim::TrafficTask& task,
                         const netsim::SimConfig& sim_cfg,
                         const PpoConfig& cfg, std::uint64_t seed,
                         std::uint64_t eval_seed, std::string policy_id);

struct Evaluation {
  Experience experience;
  double cumulative_reward = 0.0;
  double mean_g_sd = 0.0;
};

Evaluation evaluate_policy(const Policy& policy, const netsim::TrafficTask& task,
                           const netsim::SimConfig& sim_cfg, int eval_steps,
                           std::uint64_t seed);

// Any per-step controller, for baselines that share the rollout loop.
using Controller =
    std::function<netsim::ActionParams(const netsim::StateVector&)>;
Evaluation evaluate_controller(const Controller& controller,
                               const netsim::TrafficTask& task,
                               const netsim::SimConfig& sim_cfg,
                               int eval_steps, std::uint64_t seed,
                               std::string policy_id);

// Central finite differences against an analytic gradient.
using LossFn =
    std::function<double(std::span<const double>, std::vector<double>*)>;
struct GradCheck {
  double max_relative_error = 0.0;
  double max_abs_analytic = 0.0;
  std::size_t worst_index = 0;
};
// Relative error per component is |a - f| / max(|a|, |f|, floor).
GradCheck finite_difference_check(const LossFn& loss,
                                  std::span<const double> params,
                                  double step = 1e-5, double floor = 1e-6);

enum class LossKind { ppo_policy, value, ppo_total };
double policy_gradient_check(const Policy& policy, const Batch& batch,
                             LossKind kind, double clip_epsilon = 0.2,
                             double step = 1e-5);

nlohmann::json to_json(const Policy& policy);
// Weights, normalizer, bounds and provenance. Experiences are referenced by
// key under "experiences" and restored separately.
Policy policy_from_json(const nlohmann::json& j);

std::string experience_to_csv(const Experience& e);
Experience experience_from_csv(const std::string& csv, std::string task_id,
                               std::string policy_id, std::uint64_t seed);
nlohmann::json experience_sidecar(const Experience& e);

}  // namespace taskbank::rl
