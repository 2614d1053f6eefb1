#include <doctest.h>

#include <cmath>
#include <random>

#include "taskbank/distill.hpp"

using namespace taskbank;
using namespace taskbank::distill;

namespace {

netsim::SimConfig tiny_sim() {
  netsim::SimConfig c;
  c.ticks_per_step = 2;
  c.warmup_ticks = 30;
  return c;
}

netsim::TrafficTask task_number(int i) {
  netsim::TaskGenOptions o;
  o.count = 8;
  o.n_archetypes = 4;
  o.seed = 21;
  o.period_s = 120.0;
  return netsim::generate_tasks(o)[static_cast<std::size_t>(i)];
}

// Seeded network with a louder mean head so policies disagree noticeably.
rl::Policy random_policy(const std::string& id, std::uint64_t seed, int task = 0) {
  const auto sim = tiny_sim();
  auto p = rl::make_policy(id, sim, seed, 16);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  const auto& m = p.layout.actor;
  const std::size_t head = m.offset + static_cast<std::size_t>(m.hidden * m.in + m.hidden + m.hidden * m.hidden + m.hidden);
  for (std::size_t k = head; k < m.offset + m.size(); ++k) p.params[k] = g(rng);
  const auto t = task_number(task);
  p.provenance.trained_task_ids = {t.task_id};
  p.training_experiences.push_back(rl::evaluate_policy(p, t, sim, 25, seed).experience);
  return p;
}

// Every state maps to the same action: zero weights and a head bias at
// atanh of the target's position inside the bounds.
rl::Policy constant_policy(const std::string& id, const std::vector<double>& action) {
  auto p = random_policy(id, 1);
  const auto& m = p.layout.actor;
  std::fill(p.params.begin() + static_cast<long>(m.offset),
            p.params.begin() + static_cast<long>(m.offset + m.size()), 0.0);
  const std::size_t bias = m.offset + m.size() - static_cast<std::size_t>(m.out);
  for (std::size_t d = 0; d < action.size(); ++d) {
    const double mid = 0.5 * (p.action_low[d] + p.action_high[d]);
    const double half = 0.5 * (p.action_high[d] - p.action_low[d]);
    p.params[bias + d] = std::atanh((action[d] - mid) / half);
  }
  return p;
}

std::vector<double> shifted_default(double dx) {
  auto a = netsim::default_action(4).to_vector();
  a[0] += dx;
  return a;
}

PolicyBank bank_of(int count) {
  PolicyBank bank;
  for (int i = 0; i < count; ++i) {
    auto p = random_policy("pi_t" + std::to_string(i), 100 + static_cast<std::uint64_t>(i), i % 8);
    bank.groups[p.policy_id] = {"g" + std::to_string(i), "g" + std::to_string(i + 50)};
    bank.policies.push_back(std::move(p));
  }
  return bank;
}

DistillConfig quick() {
  DistillConfig c;
  c.epochs = 20;
  return c;
}

}  // namespace

TEST_CASE("policy similarity") {
  const auto a = random_policy("a", 1), b = random_policy("b", 2);
  const auto states = training_states(b);
  CHECK(policy_similarity(a, a, states) == 0.0);
  CHECK(policy_similarity(a, b, states) > 0.0);

  // Independent per-state re-evaluation.
  double sum = 0.0;
  for (const auto& s : states) {
    const auto x = a.deterministic_action(s), y = b.deterministic_action(s);
    double sq = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) sq += (x[d] - y[d]) * (x[d] - y[d]);
    sum += std::sqrt(sq);
  }
  CHECK(policy_similarity(a, b, states) == doctest::Approx(sum / static_cast<double>(states.size())));

  auto shifted = shifted_default(0.0);
  shifted[0] += 3.0;
  shifted[12] += 4.0;
  const auto c1 = constant_policy("c1", shifted_default(0.0));
  const auto c2 = constant_policy("c2", shifted);
  CHECK(policy_similarity(c1, c2, states) == doctest::Approx(5.0));

  StateSet none;
  CHECK_THROWS(policy_similarity(a, b, none));
}

TEST_CASE("delta is a pseudometric on a shared state set") {
  std::vector<rl::Policy> ps;
  for (int i = 0; i < 5; ++i) ps.push_back(random_policy("p" + std::to_string(i), 10 + static_cast<std::uint64_t>(i), i));
  const auto states = training_states(ps[0]);
  for (const auto& x : ps)
    for (const auto& y : ps)
      for (const auto& z : ps) {
        const double xz = policy_similarity(x, z, states);
        REQUIRE(xz <= policy_similarity(x, y, states) + policy_similarity(y, z, states) + 1e-12);
        REQUIRE(policy_similarity(x, y, states) == doctest::Approx(policy_similarity(y, x, states)));
      }
}

TEST_CASE("most similar pair") {
  // Constant actions on a line: AB = 1, AC = 2, BC = 3.
  std::vector<rl::Policy> ps{constant_policy("A", shifted_default(0.0)),
                             constant_policy("B", shifted_default(1.0)),
                             constant_policy("C", shifted_default(-2.0))};
  auto pick = most_similar_pair(ps);
  CHECK(ps[pick.i].policy_id == "A");
  CHECK(ps[pick.j].policy_id == "B");
  CHECK(pick.similarity == doctest::Approx(1.0));

  std::vector<rl::Policy> with_twin{random_policy("x", 3), random_policy("y", 4), random_policy("z", 5)};
  with_twin.push_back(with_twin[1]);
  with_twin.back().policy_id = "w";
  pick = most_similar_pair(with_twin);
  CHECK(pick.similarity == doctest::Approx(0.0));
  CHECK(with_twin[pick.i].policy_id == "w");
  CHECK(with_twin[pick.j].policy_id == "y");

  std::vector<rl::Policy> equal{constant_policy("q", shifted_default(0.0)),
                                constant_policy("m", shifted_default(0.0)),
                                constant_policy("k", shifted_default(0.0))};
  pick = most_similar_pair(equal);
  CHECK(equal[pick.i].policy_id == "k");
  CHECK(equal[pick.j].policy_id == "m");

  CHECK_THROWS(most_similar_pair(std::span<const rl::Policy>(equal.data(), 1)));
}

TEST_CASE("KL loss value and gradient") {
  const auto a = random_policy("a", 6), b = random_policy("b", 7);
  auto student = random_policy("s", 8);
  const auto sa = training_states(a), sb = training_states(b);
  const Teacher teachers[] = {{&a, &sa}, {&b, &sb}};
  const auto targets = make_kl_targets(student, teachers);
  CHECK(targets.size() == sa.size() + sb.size());

  // Closed form recomputed per dimension.
  const double J = kl_loss(student.layout, student.params, targets, nullptr);
  double oracle = 0.0;
  const auto ls = student.log_std();
  for (std::size_t n = 0; n < targets.size(); ++n) {
    std::vector<double> mu(targets.mu[n].size());
    rl::Mlp3::Cache cache;
    student.layout.actor.forward(student.params, targets.obs[n], cache, mu);
    for (std::size_t d = 0; d < mu.size(); ++d) {
      const double vt = std::exp(2 * targets.log_std[n][d]), vs = std::exp(2 * ls[d]);
      oracle += 0.5 * (std::log(vs / vt) + (vt + std::pow(targets.mu[n][d] - mu[d], 2)) / vs - 1.0);
    }
  }
  CHECK(J == doctest::Approx(oracle).epsilon(1e-10));

  // Gradient on seeded random targets, with log-std moved off its initial
  // constant so every term is exercised.
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  for (int d = 0; d < student.act_dim(); ++d)
    student.params[student.layout.log_std_offset + static_cast<std::size_t>(d)] += u(rng);
  KlTargets random;
  for (int n = 0; n < 8; ++n) {
    std::vector<double> o(12), mu(20), ls(20);
    for (double& x : o) x = g(rng);
    for (double& x : mu) x = 0.5 * g(rng);
    for (double& x : ls) x = -0.5 + u(rng);
    random.obs.push_back(o);
    random.mu.push_back(mu);
    random.log_std.push_back(ls);
  }
  const auto check = rl::finite_difference_check(
      [&](std::span<const double> p, std::vector<double>* grad) { return kl_loss(student.layout, p, random, grad); },
      student.params);
  CHECK(check.max_relative_error <= 1e-4);
}

TEST_CASE("distilling a policy into a copy of itself starts at zero loss") {
  const auto a = random_policy("a", 9);
  DistillConfig cfg = quick();
  const auto res = distill_pair(a, a, cfg, "s", &a);
  CHECK(res.loss_curve.front() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(res.loss_curve.front()) < 1e-9);
}

TEST_CASE("distillation loss never increases and the student stays close") {
  const auto a = random_policy("a", 11, 0), b = random_policy("b", 12, 1);
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    DistillConfig cfg;
    cfg.seed = seed;
    const auto res = distill_pair(a, b, cfg, "s");
    REQUIRE(res.loss_curve.size() == static_cast<std::size_t>(cfg.epochs + 1));
    for (std::size_t e = 1; e < res.loss_curve.size(); ++e)
      REQUIRE(res.loss_curve[e] <= res.loss_curve[e - 1] + 1e-6);
    CHECK(res.final_loss < res.loss_curve.front());
    const double pair = symmetric_similarity(a, b);
    const double range = 0.05 * (netsim::kThresholdMax - netsim::kThresholdMin);
    CHECK(policy_similarity(res.student, a, training_states(a)) <= pair + range);

    CHECK(res.student.training_experiences.size() == 2);
    CHECK(res.student.provenance.parent_ids == std::vector<std::string>{"a", "b"});
    CHECK(res.student.provenance.trained_task_ids.size() == 2);
  }
}

TEST_CASE("cap_bank") {
  auto bank = bank_of(4);
  CHECK(cap_bank(bank, 4, quick()) == 0);
  CHECK(bank.size() == 4);
  CHECK(bank.merges.empty());

  bank = bank_of(6);
  const auto covered = bank.covered_tasks();
  const auto grouped = bank.grouped_tasks();
  const auto keys = bank.experience_keys();
  CHECK(cap_bank(bank, 4, quick()) == 2);
  CHECK(bank.size() == 4);
  REQUIRE(bank.merges.size() == 2);
  CHECK(bank.covered_tasks() == covered);
  CHECK(bank.grouped_tasks() == grouped);
  CHECK(bank.experience_keys() == keys);
  for (const auto& m : bank.merges) {
    CHECK(m.parent_ids.size() == 2);
    for (const auto& parent : m.parent_ids) CHECK(bank.find(parent) == nullptr);
    CHECK(to_json(merge_record_from_json(to_json(m))) == to_json(m));
  }
  CHECK(bank.merges[0].student_id == "pi_merge_000");

  bank = bank_of(5);
  CHECK(cap_bank(bank, 1, quick()) == 4);
  CHECK(bank.size() == 1);
  CHECK(bank.policies[0].training_experiences.size() == 5);
  CHECK_THROWS(cap_bank(bank, 0, quick()));
}
