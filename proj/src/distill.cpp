#include "taskbank/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "taskbank/seeding.hpp"

namespace taskbank::distill {

void DistillConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("distill: epochs must be >= 0");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("distill: learning_rate must be positive");
  if (max_backtracks < 0)
    throw std::invalid_argument("distill: max_backtracks must be >= 0");
}

nlohmann::json to_json(const DistillConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"monotone", c.monotone},
          {"max_backtracks", c.max_backtracks}};
}

DistillConfig distill_config_from_json(const nlohmann::json& j) {
  DistillConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.monotone = j.value("monotone", c.monotone);
  c.max_backtracks = j.value("max_backtracks", c.max_backtracks);
  c.validate();
  return c;
}

StateSet training_states(const rl::Policy& p) {
  StateSet out;
  for (const auto& e : p.training_experiences)
    out.insert(out.end(), e.states.begin(), e.states.end());
  return out;
}

double policy_similarity(const rl::Policy& pi_i, const rl::Policy& pi_j,
                         const StateSet& states) {
  if (states.empty()) throw std::invalid_argument("policy_similarity: no states");
  if (pi_i.obs_dim() != pi_j.obs_dim() || pi_i.act_dim() != pi_j.act_dim())
    throw std::invalid_argument("policy_similarity: dimension mismatch");
  double total = 0.0;
  for (const auto& s : states) {
    const auto a = pi_i.deterministic_action(s);
    const auto b = pi_j.deterministic_action(s);
    double sq = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) sq += (a[d] - b[d]) * (a[d] - b[d]);
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(states.size());
}

double symmetric_similarity(const rl::Policy& a, const rl::Policy& b) {
  return 0.5 * (policy_similarity(a, b, training_states(b)) +
                policy_similarity(b, a, training_states(a)));
}

PairChoice most_similar_pair(std::span<const rl::Policy> policies) {
  if (policies.size() < 2)
    throw std::invalid_argument("most_similar_pair: need at least 2 policies");
  PairChoice best;
  best.similarity = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t x = 0; x < policies.size(); ++x) {
    for (std::size_t y = x + 1; y < policies.size(); ++y) {
      std::size_t i = x, j = y;
      if (policies[j].policy_id < policies[i].policy_id) std::swap(i, j);
      const double s = symmetric_similarity(policies[i], policies[j]);
      const auto key = std::tie(policies[i].policy_id, policies[j].policy_id);
      const bool better =
          !found || s < best.similarity ||
          (s == best.similarity &&
           key < std::tie(policies[best.i].policy_id, policies[best.j].policy_id));
      if (better) {
        best = {i, j, s};
        found = true;
      }
    }
  }
  return best;
}

KlTargets make_kl_targets(const rl::Policy& student,
                          std::span<const Teacher> teachers) {
  KlTargets t;
  for (const auto& teacher : teachers) {
    const auto ls = teacher.policy->log_std();
    std::vector<double> clamped(ls.size());
    for (std::size_t d = 0; d < ls.size(); ++d)
      clamped[d] = std::clamp(ls[d], rl::kLogStdMin, rl::kLogStdMax);
    for (const auto& s : *teacher.states) {
      t.obs.push_back(student.obs_norm.normalize(s));
      t.mu.push_back(teacher.policy->mean(s));
      t.log_std.push_back(clamped);
    }
  }
  return t;
}

double kl_loss(const rl::NetLayout& layout, std::span<const double> params,
               const KlTargets& targets, std::vector<double>* grad) {
  const auto a = static_cast<std::size_t>(layout.act_dim());
  if (grad) grad->assign(params.size(), 0.0);
  const auto raw_ls = params.subspan(layout.log_std_offset, a);
  std::vector<double> ls(a), inv_var(a);
  for (std::size_t d = 0; d < a; ++d) {
    ls[d] = std::clamp(raw_ls[d], rl::kLogStdMin, rl::kLogStdMax);
    inv_var[d] = std::exp(-2.0 * ls[d]);
  }
  double J = 0.0;
  std::vector<double> mu(a), dmu(a), dls(a, 0.0);
  rl::Mlp3::Cache cache;
  for (std::size_t n = 0; n < targets.size(); ++n) {
    layout.actor.forward(params, targets.obs[n], cache, mu);
    for (std::size_t d = 0; d < a; ++d) {
      const double lt = targets.log_std[n][d];
      const double var_t = std::exp(2.0 * lt);
      const double diff = targets.mu[n][d] - mu[d];
      const double ratio = (var_t + diff * diff) * inv_var[d];
      J += ls[d] - lt + 0.5 * ratio - 0.5;
      dmu[d] = -diff * inv_var[d];
      dls[d] += 1.0 - ratio;
    }
    if (grad) layout.actor.backward(params, cache, dmu, *grad);
  }
  if (grad)
    for (std::size_t d = 0; d < a; ++d)
      if (raw_ls[d] > rl::kLogStdMin && raw_ls[d] < rl::kLogStdMax)
        (*grad)[layout.log_std_offset + d] = dls[d];
  return J;
}

namespace {

rl::ObsNormalizer pooled_normalizer(const StateSet& a, const StateSet& b) {
  const std::size_t dim = a.empty() ? b.front().size() : a.front().size();
  auto norm = rl::ObsNormalizer::identity(static_cast<int>(dim));
  const double n = static_cast<double>(a.size() + b.size());
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (const auto* set : {&a, &b})
    for (const auto& s : *set)
      for (std::size_t d = 0; d < dim; ++d) mean[d] += s[d] / n;
  for (const auto* set : {&a, &b})
    for (const auto& s : *set)
      for (std::size_t d = 0; d < dim; ++d) var[d] += (s[d] - mean[d]) * (s[d] - mean[d]) / n;
  norm.mean = mean;
  norm.var = var;
  norm.count = n;
  return norm;
}

void check_finite(double v) {
  if (!std::isfinite(v)) throw rl::TrainingDiverged("distillation loss is not finite");
}

}  // namespace

DistillResult distill_pair(const rl::Policy& pi_i, const rl::Policy& pi_j,
                           const DistillConfig& cfg, std::string student_id,
                           const rl::Policy* init_from) {
  cfg.validate();
  if (pi_i.obs_dim() != pi_j.obs_dim() || pi_i.act_dim() != pi_j.act_dim())
    throw std::invalid_argument("distill_pair: teachers differ in shape");
  const StateSet s_i = training_states(pi_i);
  const StateSet s_j = training_states(pi_j);
  if (s_i.empty() || s_j.empty())
    throw std::invalid_argument("distill_pair: teacher without experiences");

  DistillResult result;
  rl::Policy& student = result.student;
  if (init_from) {
    // Weights and normalizer are copied as-is.
    student = *init_from;
  } else {
    netsim::SimConfig shape;
    shape.n_cells = pi_i.obs_dim() / 3;
    student = rl::make_policy(student_id, shape, derive_seed(cfg.seed, student_id),
                              pi_i.layout.actor.hidden);
    student.obs_norm = pooled_normalizer(s_i, s_j);
  }
  student.policy_id = std::move(student_id);
  student.action_low = pi_i.action_low;
  student.action_high = pi_i.action_high;
  student.provenance.parent_ids = {pi_i.policy_id, pi_j.policy_id};
  student.provenance.trained_task_ids = pi_i.provenance.trained_task_ids;
  student.provenance.trained_task_ids.insert(student.provenance.trained_task_ids.end(),
                                             pi_j.provenance.trained_task_ids.begin(),
                                             pi_j.provenance.trained_task_ids.end());
  student.training_experiences = pi_i.training_experiences;
  student.training_experiences.insert(student.training_experiences.end(),
                                      pi_j.training_experiences.begin(),
                                      pi_j.training_experiences.end());
  student.final_eval_reward = 0.0;

  const Teacher teachers[] = {{&pi_i, &s_i}, {&pi_j, &s_j}};
  const KlTargets targets = make_kl_targets(student, teachers);

  std::vector<double> grad, trial_grad;
  double J = kl_loss(student.layout, student.params, targets, &grad);
  check_finite(J);
  result.loss_curve.push_back(J);
  rl::Adam opt(student.params.size(), cfg.learning_rate);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.learning_rate;
    for (int attempt = 0; attempt <= cfg.max_backtracks; ++attempt) {
      rl::Adam trial_opt = opt;
      trial_opt.set_lr(lr);
      std::vector<double> trial = student.params;
      trial_opt.step(trial, grad);
      const double J_new = kl_loss(student.layout, trial, targets, &trial_grad);
      check_finite(J_new);
      if (!cfg.monotone || J_new <= J) {
        student.params = std::move(trial);
        trial_opt.set_lr(cfg.learning_rate);
        opt = std::move(trial_opt);
        grad.swap(trial_grad);
        J = J_new;
        break;
      }
      lr *= 0.5;
    }
    result.loss_curve.push_back(J);
  }
  result.final_loss = J;
  return result;
}

int cap_bank(PolicyBank& bank, std::size_t n, const DistillConfig& cfg) {
  if (n < 1) throw std::invalid_argument("cap_bank: n must be >= 1");
  int merges = 0;
  while (bank.policies.size() > n) {
    const auto pair = most_similar_pair(bank.policies);
    const rl::Policy& a = bank.policies[pair.i];
    const rl::Policy& b = bank.policies[pair.j];
    char id[32];
    std::snprintf(id, sizeof id, "pi_merge_%03d", bank.next_merge_id++);
    auto res = distill_pair(a, b, cfg, id);

    MergeRecord rec;
    rec.student_id = id;
    rec.parent_ids = {a.policy_id, b.policy_id};
    rec.similarity = pair.similarity;
    rec.final_loss = res.final_loss;
    rec.iteration = bank.iteration;
    for (const auto& e : res.student.training_experiences)
      rec.inherited_experiences.push_back(e.key());
    std::set<std::string> grouped;
    for (const auto& pid : rec.parent_ids) {
      auto it = bank.groups.find(pid);
      if (it == bank.groups.end()) continue;
      grouped.insert(it->second.begin(), it->second.end());
      bank.groups.erase(it);
    }
    rec.grouped_tasks.assign(grouped.begin(), grouped.end());
    bank.groups[id] = std::move(grouped);

    const std::string ida = a.policy_id, idb = b.policy_id;
    std::erase_if(bank.policies, [&](const rl::Policy& p) {
      return p.policy_id == ida || p.policy_id == idb;
    });
    bank.policies.push_back(std::move(res.student));
    bank.merges.push_back(std::move(rec));
    ++merges;
  }
  return merges;
}

}  // namespace taskbank::distill
