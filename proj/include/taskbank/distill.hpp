#pragma once

// Policy similarity and two-teacher distillation used to keep the bank small.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "taskbank/bank.hpp"
#include "taskbank/rl.hpp"

namespace taskbank::distill {

struct DistillConfig {
  int epochs = 200;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  // Reject (and retry with half the step size) any update that raises J.
  bool monotone = true;
  int max_backtracks = 30;

  void validate() const;
};

nlohmann::json to_json(const DistillConfig& c);
DistillConfig distill_config_from_json(const nlohmann::json& j);

using StateSet = std::vector<std::vector<double>>;

// Raw states from every training experience of the policy.
StateSet training_states(const rl::Policy& p);

// Mean L2 distance between deterministic actions over `states`.
double policy_similarity(const rl::Policy& pi_i, const rl::Policy& pi_j,
                         const StateSet& states);
// (delta(i,j) + delta(j,i)) / 2, each on the other policy's training states.
double symmetric_similarity(const rl::Policy& a, const rl::Policy& b);

struct PairChoice {
  std::size_t i = 0;
  std::size_t j = 0;
  double similarity = 0.0;
};
// Index pair with the smallest symmetrized delta, ordered so that
// policies[i].policy_id < policies[j].policy_id. Ties go to the
// lexicographically smallest (id_i, id_j).
PairChoice most_similar_pair(std::span<const rl::Policy> policies);

// One teacher and the states its KL term is evaluated on.
struct Teacher {
  const rl::Policy* policy = nullptr;
  const StateSet* states = nullptr;
};

// Precomputed teacher targets for one state set, in student-normalized inputs.
struct KlTargets {
  std::vector<std::vector<double>> obs;  // student-normalized
  std::vector<std::vector<double>> mu;       // teacher pre-squash mean
  std::vector<std::vector<double>> log_std;  // teacher, clamped

  std::size_t size() const { return obs.size(); }
};

KlTargets make_kl_targets(const rl::Policy& student,
                          std::span<const Teacher> teachers);

// Sum over samples of KL(teacher || student) between diagonal Gaussians on
// the pre-squash variable. `grad` (if non-null) receives dJ/dparams over the
// actor and log-std entries; critic entries are zero.
double kl_loss(const rl::NetLayout& layout, std::span<const double> params,
               const KlTargets& targets, std::vector<double>* grad);

struct DistillResult {
  rl::Policy student;
  double final_loss = 0.0;
  std::vector<double> loss_curve;  // J at epoch 0..epochs
};

// Trains a student on both teachers. The student starts from a fresh seeded
// network unless `init_from` is given. It inherits both parents' experiences
// and training tasks.
DistillResult distill_pair(const rl::Policy& pi_i, const rl::Policy& pi_j,
                           const DistillConfig& cfg, std::string student_id,
                           const rl::Policy* init_from = nullptr);

// Merges the most similar pair until the bank holds at most n policies.
// Returns the number of merges performed.
int cap_bank(PolicyBank& bank, std::size_t n, const DistillConfig& cfg);

}  // namespace taskbank::distill
