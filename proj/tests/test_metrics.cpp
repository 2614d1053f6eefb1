#include <doctest.h>

#include <cmath>
#include <sstream>

#include "taskbank/metrics.hpp"

using namespace taskbank;
using namespace taskbank::metrics;

namespace {

netsim::SimConfig quick_sim() {
  netsim::SimConfig c;
  c.ticks_per_step = 2;
  c.warmup_ticks = 20;
  return c;
}

std::vector<netsim::TrafficTask> some_tasks(int count) {
  netsim::TaskGenOptions o;
  o.count = count;
  o.n_archetypes = std::min(count, 2);
  o.seed = 8;
  o.period_s = 480.0;
  return netsim::generate_tasks(o);
}

rl::Policy policy_for(const netsim::TrafficTask& t, std::uint64_t seed) {
  auto p = rl::make_policy("pi_" + t.task_id, quick_sim(), seed, 8);
  p.provenance.trained_task_ids = {t.task_id};
  return p;
}

}  // namespace

TEST_CASE("rho over training and grouped tasks") {
  const auto tasks = some_tasks(3);
  const auto idx = index_tasks(tasks);
  const auto sim = quick_sim();
  PolicyBank bank;
  bank.policies.push_back(policy_for(tasks[0], 1));

  auto single = compute_rho(bank, idx, sim, 20, 7);
  const double r0 =
      rl::evaluate_policy(bank.policies[0], tasks[0], sim, 20, rho_seed(7, tasks[0].task_id)).cumulative_reward;
  CHECK(single.rho == doctest::Approx(r0));
  REQUIRE(single.per_task.size() == 1);

  bank.groups[bank.policies[0].policy_id] = {tasks[2].task_id};
  bank.policies.push_back(policy_for(tasks[1], 2));
  const auto multi = compute_rho(bank, idx, sim, 20, 7);
  REQUIRE(multi.per_task.size() == 3);
  double sum = 0.0;
  for (const auto& tr : multi.per_task) {
    const auto* p = bank.find(tr.policy_id);
    REQUIRE(p != nullptr);
    sum += rl::evaluate_policy(*p, *idx.at(tr.task_id), sim, 20, rho_seed(7, tr.task_id)).cumulative_reward;
  }
  CHECK(multi.rho == doctest::Approx(sum / 3));
  CHECK(compute_rho(bank, idx, sim, 20, 7, 3).rho == multi.rho);

  CHECK(mean_reward({{"a", "x", 4.0}, {"b", "y", 6.0}}) == 5.0);
  CHECK_THROWS(compute_rho(PolicyBank{}, idx, sim, 20, 7));
}

TEST_CASE("xi") {
  CHECK(compute_xi(10.0, 200000) == doctest::Approx(5.0));
  CHECK(compute_xi(7.5, 300000) == doctest::Approx(2.5));
  CHECK(compute_xi(10.0, 400000) == doctest::Approx(compute_xi(10.0, 200000) / 2));
  CHECK_THROWS(compute_xi(10.0, 0));
}

TEST_CASE("fixed-parameter baseline") {
  const auto sim = quick_sim();
  netsim::TrafficTask quiet;
  quiet.task_id = "quiet";
  quiet.cells.assign(4, netsim::CellTraffic{0.0, 0.0, 0.0, 480.0});
  CHECK(fp_baseline(quiet, sim, 240, 1) == doctest::Approx(240 * 0.25));

  const auto tasks = some_tasks(2);
  CHECK(fp_baseline(tasks[0], sim, 30, 4) == fp_baseline(tasks[0], sim, 30, 4));
  const auto e = fp_evaluation(tasks[0], sim, 30, 4);
  CHECK(e.experience.length() == 30);

  const auto res = baseline_result("fp", tasks, sim, 30, 4);
  CHECK(res.per_task.size() == 2);
  CHECK(std::isnan(res.xi));
  CHECK(res.w_steps == 0);
  CHECK(res.per_task[0].reward ==
        doctest::Approx(fp_baseline(*index_tasks(tasks).at(res.per_task[0].task_id), sim, 30,
                                    rho_seed(4, res.per_task[0].task_id))));
  CHECK_THROWS(baseline_result("ts", tasks, sim, 30, 4));
}

TEST_CASE("adaptive rule") {
  auto s = netsim::StateVector::zeros(4);
  s.utilization = {0.4, 0.4, 0.4, 0.4};
  auto a = ar_action(s);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) CHECK(a.alpha_at(i, j) == 0.0);
  CHECK(a.beta == netsim::default_action(4).beta);
  CHECK(a.lambda == netsim::default_action(4).lambda);

  s.utilization = {1.0, 0.0, 0.5, 0.5};
  a = ar_action(s);
  CHECK(a.alpha_at(0, 1) == -6.0);
  CHECK(a.alpha_at(1, 0) == 6.0);
  CHECK(a.alpha_at(2, 1) == doctest::Approx(-3.0));
  CHECK(a.within_bounds());
}

TEST_CASE("adaptive rule balances a skewed task better than fixed parameters") {
  netsim::SimConfig sim;
  sim.ticks_per_step = 10;
  sim.warmup_ticks = 300;
  netsim::TrafficTask skew;
  skew.task_id = "skew";
  skew.cells = {{0.8, 0.0, 0.0, 2400.0}, {0.05, 0.0, 0.0, 2400.0},
                {0.05, 0.0, 0.0, 2400.0}, {0.05, 0.0, 0.0, 2400.0}};
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    wins += ar_evaluation(skew, sim, 120, seed).mean_g_sd < fp_evaluation(skew, sim, 120, seed).mean_g_sd;
  CHECK(wins >= 4);
}

TEST_CASE("report and per-task files round trip") {
  EvalResult r;
  r.method = "bg";
  r.seed = 3;
  r.n = 8;
  r.threshold = 0.3;
  r.per_task = {{"pi_a", "t1", 1.0 / 3.0}, {"pi_a", "t2", 2.5}, {"pi_b", "t3", 7.25}};
  r.rho = mean_reward(r.per_task);
  r.w_steps = 600000;
  r.xi = compute_xi(r.rho, r.w_steps);
  r.num_trained = 3;
  CHECK(r.xi * r.w_units() == doctest::Approx(r.rho).epsilon(1e-9));

  std::stringstream report;
  write_report_header(report);
  report << "# schema=1 config_hash=abc\n";
  append_report_row(report, r);
  EvalResult fp;
  fp.method = "fp";
  fp.rho = 2.0;
  append_report_row(report, fp);
  const auto rows = read_report(report);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].method == "bg");
  CHECK(rows[0].rho == r.rho);
  CHECK(rows[0].xi == r.xi);
  CHECK(rows[0].w_steps == r.w_steps);
  CHECK(rows[0].threshold == r.threshold);
  CHECK(rows[0].num_trained == 3);
  CHECK(std::isnan(rows[1].xi));

  std::stringstream per;
  write_per_task(per, r);
  const auto back = read_per_task(per);
  REQUIRE(back.size() == 3);
  CHECK(mean_reward(back) == r.rho);
}
