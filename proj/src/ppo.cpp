#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "taskbank/rl.hpp"
#include "taskbank/seeding.hpp"

namespace taskbank::rl {

void compute_gae(std::span<const double> rewards, std::span<const double> values,
                 std::span<const double> next_values,
                 std::span<const bool> episode_end, double gamma, double lambda,
                 std::vector<double>& advantages, std::vector<double>& returns) {
  const std::size_t n = rewards.size();
  if (values.size() != n || next_values.size() != n || episode_end.size() != n)
    throw std::invalid_argument("compute_gae: length mismatch");
  advantages.assign(n, 0.0);
  returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double delta = rewards[k] + gamma * next_values[k] - values[k];
    const double carry = episode_end[k] ? 0.0 : running;
    running = delta + gamma * lambda * carry;
    advantages[k] = running;
    returns[k] = running + values[k];
  }
}

void PpoConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  require(gamma > 0.0 && gamma <= 1.0, "ppo: gamma must be in (0, 1]");
  require(gae_lambda > 0.0 && gae_lambda <= 1.0, "ppo: gae_lambda must be in (0, 1]");
  require(clip_epsilon > 0.0, "ppo: clip_epsilon must be positive");
  require(learning_rate > 0.0, "ppo: learning_rate must be positive");
  require(epochs_per_update >= 1, "ppo: epochs_per_update must be >= 1");
  require(minibatch_size >= 1, "ppo: minibatch_size must be >= 1");
  require(steps_per_update >= 1, "ppo: steps_per_update must be >= 1");
  require(total_env_steps >= steps_per_update &&
              total_env_steps % steps_per_update == 0,
          "ppo: total_env_steps must be divisible by steps_per_update");
  require(vf_coef >= 0.0 && ent_coef >= 0.0, "ppo: coefficients must be >= 0");
  require(hidden >= 1, "ppo: hidden must be >= 1");
  require(eval_steps >= 1, "ppo: eval_steps must be >= 1");
}

nlohmann::json to_json(const PpoConfig& c) {
  return {{"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"clip_epsilon", c.clip_epsilon},
          {"learning_rate", c.learning_rate},
          {"epochs_per_update", c.epochs_per_update},
          {"minibatch_size", c.minibatch_size},
          {"steps_per_update", c.steps_per_update},
          {"total_env_steps", c.total_env_steps},
          {"vf_coef", c.vf_coef},
          {"ent_coef", c.ent_coef},
          {"max_grad_norm", c.max_grad_norm},
          {"normalize_rewards", c.normalize_rewards},
          {"hidden", c.hidden},
          {"init_log_std", c.init_log_std},
          {"eval_steps", c.eval_steps}};
}

PpoConfig ppo_config_from_json(const nlohmann::json& j) {
  PpoConfig c;
  c.gamma = j.value("gamma", c.gamma);
  c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
  c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs_per_update = j.value("epochs_per_update", c.epochs_per_update);
  c.minibatch_size = j.value("minibatch_size", c.minibatch_size);
  c.steps_per_update = j.value("steps_per_update", c.steps_per_update);
  c.total_env_steps = j.value("total_env_steps", c.total_env_steps);
  c.vf_coef = j.value("vf_coef", c.vf_coef);
  c.ent_coef = j.value("ent_coef", c.ent_coef);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.normalize_rewards = j.value("normalize_rewards", c.normalize_rewards);
  c.hidden = j.value("hidden", c.hidden);
  c.init_log_std = j.value("init_log_std", c.init_log_std);
  c.eval_steps = j.value("eval_steps", c.eval_steps);
  c.validate();
  return c;
}

namespace {

void apply_gradient(Policy& policy, Adam& opt, std::vector<double>& grad,
                    double max_grad_norm) {
  for (double g : grad)
    if (!std::isfinite(g)) throw TrainingDiverged("non-finite gradient");
  clip_grad_norm(grad, max_grad_norm);
  opt.step(policy.params, grad);
}

}  // namespace

void ppo_update(Policy& policy, Adam& opt, const Batch& batch,
                const PpoConfig& cfg, std::mt19937_64& rng) {
  const std::size_t n = batch.size();
  const auto mb = std::min(n, static_cast<std::size_t>(cfg.minibatch_size));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<double> grad;
  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    if (mb < n) std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t end = std::min(n, start + mb);
      const Batch sub =
          (start == 0 && end == n && mb == n)
              ? batch
              : batch.subset(std::span<const std::size_t>(idx).subspan(start, end - start));
      const auto terms = ppo_loss(policy.layout, policy.params, sub,
                                  cfg.clip_epsilon, cfg.vf_coef, cfg.ent_coef, &grad);
      if (!std::isfinite(terms.total)) throw TrainingDiverged("non-finite loss");
      apply_gradient(policy, opt, grad, cfg.max_grad_norm);
    }
  }
}

void vanilla_pg_update(Policy& policy, Adam& opt, const Batch& batch,
                       const PpoConfig& cfg) {
  std::vector<double> grad;
  const auto terms = vanilla_pg_loss(policy.layout, policy.params, batch,
                                     cfg.vf_coef, cfg.ent_coef, &grad);
  if (!std::isfinite(terms.total)) throw TrainingDiverged("non-finite loss");
  apply_gradient(policy, opt, grad, cfg.max_grad_norm);
}

namespace {

struct RunningScalar {
  double mean = 0.0, m2 = 0.0;
  double count = 0.0;
  void update(double x) {
    count += 1.0;
    const double d = x - mean;
    mean += d / count;
    m2 += d * (x - mean);
  }
  double var() const { return count > 1.0 ? m2 / count : 1.0; }
};

double critic_value(const Policy& p, std::span<const double> obs) {
  double v = 0.0;
  Mlp3::Cache cache;
  p.layout.critic.forward(p.params, obs, cache, std::span<double>(&v, 1));
  return v;
}

}  // namespace

TrainResult train_policy(const netsim::TrafficTask& task,
                         const netsim::SimConfig& sim_cfg, const PpoConfig& cfg,
                         std::uint64_t seed, std::uint64_t eval_seed,
                         std::string policy_id) {
  cfg.validate();
  sim_cfg.validate();
  TrainResult result;
  Policy& pol = result.policy;
  pol = make_policy(std::move(policy_id), sim_cfg, seed, cfg.hidden,
                    cfg.init_log_std);
  pol.provenance.trained_task_ids = {task.task_id};

  std::mt19937_64 rng(derive_seed(seed, "ppo"));
  Adam opt(pol.params.size(), cfg.learning_rate);
  netsim::Simulator sim(sim_cfg, task);

  std::uint64_t episode = 0;
  std::vector<double> raw = sim.reset(derive_seed(seed, episode)).flatten();
  pol.obs_norm.update(raw);
  int ep_step = 0;
  double ep_return = 0.0, disc_return = 0.0;
  RunningScalar ret_stat;

  const std::size_t n = static_cast<std::size_t>(cfg.steps_per_update);
  const long updates = cfg.total_env_steps / cfg.steps_per_update;
  for (long u = 0; u < updates; ++u) {
    Batch batch;
    std::vector<double> rewards, values, next_values;
    std::vector<char> ends;
    rewards.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
      const auto obs = pol.obs_norm.normalize(raw);
      std::vector<double> mu(static_cast<std::size_t>(pol.act_dim()));
      Mlp3::Cache cache;
      pol.layout.actor.forward(pol.params, obs, cache, mu);
      const auto ls = pol.log_std();
      std::normal_distribution<double> normal(0.0, 1.0);
      std::vector<double> pre(mu.size());
      for (std::size_t d = 0; d < mu.size(); ++d)
        pre[d] = mu[d] + std::exp(std::clamp(ls[d], kLogStdMin, kLogStdMax)) * normal(rng);
      const double lp = gaussian_log_prob(pre, mu, ls);
      const double v = critic_value(pol, obs);

      const auto action =
          netsim::ActionParams::from_vector(sim_cfg.n_cells, pol.squash(pre));
      const auto step = sim.step(action);
      if (!std::isfinite(step.reward)) throw TrainingDiverged("non-finite reward");
      ep_return += step.reward;
      double r = step.reward;
      if (cfg.normalize_rewards) {
        disc_return = disc_return * cfg.gamma + step.reward;
        ret_stat.update(disc_return);
        r = step.reward / std::sqrt(ret_stat.var() + 1e-8);
      }

      auto raw_next = step.state.flatten();
      pol.obs_norm.update(raw_next);
      ++ep_step;
      const bool end = ep_step >= sim_cfg.episode_steps;
      // Episodes are only ever truncated, so the tail always bootstraps.
      const double nv = critic_value(pol, pol.obs_norm.normalize(raw_next));

      batch.obs.push_back(obs);
      batch.pre_squash.push_back(std::move(pre));
      batch.log_prob_old.push_back(lp);
      rewards.push_back(r);
      values.push_back(v);
      next_values.push_back(nv);
      ends.push_back(end ? 1 : 0);

      if (end) {
        result.episode_returns.push_back(ep_return);
        ep_return = 0.0;
        disc_return = 0.0;
        ep_step = 0;
        ++episode;
        raw = sim.reset(derive_seed(seed, episode)).flatten();
        pol.obs_norm.update(raw);
      } else {
        raw = std::move(raw_next);
      }
    }
    result.env_steps_used += static_cast<long>(n);

    // The last transition of the rollout also bootstraps from its successor.
    auto flags = std::make_unique<bool[]>(n);
    for (std::size_t t = 0; t < n; ++t) flags[t] = ends[t] != 0;
    flags[n - 1] = true;
    compute_gae(rewards, values, next_values, std::span<const bool>(flags.get(), n),
                cfg.gamma, cfg.gae_lambda, batch.advantages, batch.returns);

    double mean = 0.0;
    for (double a : batch.advantages) mean += a;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double a : batch.advantages) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(n)) + 1e-8;
    for (double& a : batch.advantages) a = (a - mean) / sd;

    ppo_update(pol, opt, batch, cfg, rng);
  }

  auto eval = evaluate_policy(pol, task, sim_cfg, cfg.eval_steps, eval_seed);
  pol.final_eval_reward = eval.cumulative_reward;
  pol.training_experiences.push_back(std::move(eval.experience));
  return result;
}

Evaluation evaluate_controller(const Controller& controller,
                               const netsim::TrafficTask& task,
                               const netsim::SimConfig& sim_cfg, int eval_steps,
                               std::uint64_t seed, std::string policy_id) {
  if (eval_steps < 1) throw std::invalid_argument("evaluate: eval_steps < 1");
  netsim::Simulator sim(sim_cfg, task);
  auto state = sim.reset(seed);
  Evaluation ev;
  ev.experience.task_id = task.task_id;
  ev.experience.policy_id = std::move(policy_id);
  ev.experience.seed = seed;
  ev.experience.states.reserve(static_cast<std::size_t>(eval_steps));
  for (int t = 0; t < eval_steps; ++t) {
    const auto res = sim.step(controller(state));
    ev.cumulative_reward += res.reward;
    ev.mean_g_sd += res.kpis.g_sd;
    ev.experience.states.push_back(res.state.flatten());
    state = res.state;
  }
  ev.mean_g_sd /= eval_steps;
  return ev;
}

Evaluation evaluate_policy(const Policy& policy, const netsim::TrafficTask& task,
                           const netsim::SimConfig& sim_cfg, int eval_steps,
                           std::uint64_t seed) {
  std::mt19937_64 unused(0);
  return evaluate_controller(
      [&](const netsim::StateVector& s) {
        return act(policy, s, ActMode::deterministic, unused);
      },
      task, sim_cfg, eval_steps, seed, policy.policy_id);
}

}  // namespace taskbank::rl
