#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "taskbank/compat.hpp"

using namespace taskbank;
using namespace taskbank::compat;

namespace {

// Direct double sum over the Gram matrix.
double naive_cost(const std::vector<double>& y, std::size_t a, std::size_t b, double gamma) {
  if (b - a < 1) return 0.0;
  double s = 0.0;
  for (std::size_t i = a; i < b; ++i)
    for (std::size_t j = a; j < b; ++j) s += std::exp(-gamma * (y[i] - y[j]) * (y[i] - y[j]));
  return static_cast<double>(b - a) - s / static_cast<double>(b - a);
}

std::vector<double> noise(std::mt19937_64& rng, std::size_t n, double mean) {
  std::normal_distribution<double> g(mean, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

rl::Experience make_exp(std::vector<std::vector<double>> rows, std::string task = "t") {
  rl::Experience e;
  e.task_id = std::move(task);
  e.policy_id = "pi";
  e.states = std::move(rows);
  return e;
}

rl::Experience random_exp(std::mt19937_64& rng, std::size_t T, double level) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> rows;
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> r(12);
    for (std::size_t d = 0; d < 4; ++d) r[d] = std::floor(level * 10 * u(rng));
    for (std::size_t d = 4; d < 8; ++d) r[d] = std::min(1.0, level * u(rng));
    for (std::size_t d = 8; d < 12; ++d) r[d] = 5.0 * u(rng) + level;
    rows.push_back(r);
  }
  return make_exp(rows);
}

}  // namespace

TEST_CASE("normalize_series") {
  const std::vector<double> x{0.0, std::exp(1.0) - 1.0, std::exp(2.0) - 1.0};
  const auto y = normalize_series(x);
  double mean = 0, var = 0;
  for (double v : y) mean += v / 3;
  for (double v : y) var += (v - mean) * (v - mean) / 3;
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(var == doctest::Approx(1.0));
  CHECK(y[0] == doctest::Approx(-std::sqrt(1.5)));

  for (double v : normalize_series(std::vector<double>(7, 3.0))) CHECK(v == 0.0);
  for (double v : normalize_series(std::vector<double>(7, 0.0))) CHECK(v == 0.0);
  CHECK_THROWS(normalize_series(std::vector<double>{1.0, -0.5}));
}

TEST_CASE("rbf_cost examples") {
  CHECK(rbf_cost(std::vector<double>{0, 0, 1, 1}, 1.0) == doctest::Approx(2.0 - 2.0 * std::exp(-1.0)));
  CHECK(rbf_cost(std::vector<double>{0, 0, 1, 1}, 1.0) == doctest::Approx(1.2642).epsilon(1e-4));
  CHECK(rbf_cost(std::vector<double>(9, 2.5), 0.7) == doctest::Approx(0.0));
  CHECK(rbf_cost(std::vector<double>{4.0}, 0.7) == 0.0);
  CHECK_THROWS(rbf_cost(std::vector<double>{}, 1.0));
}

TEST_CASE("prefix-sum kernel cost agrees with the direct sum") {
  std::mt19937_64 rng(2);
  const auto y = noise(rng, 60, 0.0);
  KernelCost kc(y, 0.4);
  for (std::size_t a = 0; a < 60; a += 7)
    for (std::size_t b = a + 1; b <= 60; b += 5)
      CHECK(kc.cost(a, b) == doctest::Approx(naive_cost(y, a, b, 0.4)).epsilon(1e-9));
}

TEST_CASE("median heuristic") {
  // Pairwise distances of (0,1,3): 1,2,3 -> median 2.
  CHECK(median_heuristic_gamma(std::vector<double>{0, 1, 3}) == doctest::Approx(1.0 / 8.0));
  CHECK(median_heuristic_gamma(std::vector<double>(5, 1.0)) == 1.0);
}

TEST_CASE("binseg gains") {
  for (double g : binseg_gains(std::vector<double>(40, 1.0), 5, 1.0)) CHECK(g == doctest::Approx(0.0));

  std::vector<double> step(50, 0.0);
  step.resize(100, 1.0);
  const auto gains = binseg_gains(step, 10, 1.0);
  REQUIRE(gains.size() == 101);
  // Brute force over every admissible root split with the same cost.
  std::size_t best = 0;
  double best_gain = -1.0;
  const double whole = naive_cost(step, 0, 100, 1.0);
  for (std::size_t t = 10; t <= 90; ++t) {
    const double g = whole - naive_cost(step, 0, t, 1.0) - naive_cost(step, t, 100, 1.0);
    if (g > best_gain + 1e-12) best_gain = g, best = t;
  }
  CHECK(best == 50);
  CHECK(std::max_element(gains.begin(), gains.end()) - gains.begin() == 50);
  CHECK(gains[50] == doctest::Approx(best_gain));
  const auto root = binseg_root(step, 10, 1.0);
  CHECK(root.t == 50);
  CHECK(root.gain == doctest::Approx(best_gain));
  CHECK_THROWS(binseg_gains(std::vector<double>(15, 0.0), 10, 1.0));
}

TEST_CASE("root gain is non-negative at its maximum") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> len(20, 60);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto y = noise(rng, static_cast<std::size_t>(len(rng)), 0.0);
    const auto gains = binseg_gains(y, 5);
    REQUIRE(*std::max_element(gains.begin(), gains.end()) >= 0.0);
  }
}

TEST_CASE("binseg distance on synthetic benchmarks") {
  std::mt19937_64 rng(1234);
  double worst_self = 0.0, worst_asym = 0.0;
  int separated = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = noise(rng, 200, 0.0);
    const auto b = noise(rng, 200, 0.0);
    const auto c = noise(rng, 200, 5.0);
    worst_self = std::max(worst_self, binseg_distance(a, a));
    const double same = binseg_distance(a, b);
    const double shifted = binseg_distance(a, c);
    separated += same < shifted;
    worst_asym = std::max(worst_asym, std::abs(binseg_distance(c, a) - shifted) / shifted);
  }
  CHECK(worst_self <= 0.01);
  CHECK(separated >= 95);
  CHECK(worst_asym < 0.10);
}

TEST_CASE("pearson distance") {
  const std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 4};
  CHECK(pearson_distance(a, b) == doctest::Approx(0.6));
  CHECK(pearson_distance(a, a) == doctest::Approx(0.0));
  const std::vector<double> neg{-1, -2, -3, -4};
  CHECK(pearson_distance(a, neg) == doctest::Approx(0.0));
  CHECK(pearson_distance(a, std::vector<double>{2, 2, 2, 2}) == 1.0);
  // Longer input is truncated to the common prefix.
  CHECK(pearson_distance(a, std::vector<double>{1, 3, 2, 4, 100, -7}) == doctest::Approx(0.6));
  CHECK_THROWS(pearson_distance(std::vector<double>{1}, std::vector<double>{1, 2}));

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const double d = pearson_distance(noise(rng, 10, 0.0), noise(rng, 12, 0.0));
    REQUIRE((d >= 0.0 && d <= 1.0));
  }
}

TEST_CASE("kpi threshold distance") {
  auto r = kpi_threshold_distance(std::vector<double>{5, 5, 5}, 3.0);
  CHECK(r.compatible);
  CHECK(r.distance == -5.0);
  r = kpi_threshold_distance(std::vector<double>{5, 0, 5}, 0.01);
  CHECK_FALSE(r.compatible);
  r = kpi_threshold_distance(std::vector<double>{4, 2, 6}, 3.0);
  CHECK_FALSE(r.compatible);
  CHECK(r.distance == -2.0);

  // Experience form reads the throughput block of each row.
  auto e = make_exp({{0, 0, 0, 0, 0, 0, 0, 0, 4, 5, 6, 7},
                     {0, 0, 0, 0, 0, 0, 0, 0, 9, 2.5, 9, 9}});
  const auto ke = kpi_threshold_distance(e, 2.0);
  CHECK(ke.distance == -2.5);
  CHECK(ke.compatible);
}

TEST_CASE("combine dimensions") {
  CHECK(combine_dimensions(std::vector<double>{3, 4}) == 5.0);
  CHECK(combine_dimensions(std::vector<double>{0, 0}) == 0.0);
  CHECK(combine_dimensions(std::vector<double>{1, 1, 1, 1}) == 2.0);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(5);
    for (double& x : v) x = u(rng);
    const double before = combine_dimensions(v);
    v[static_cast<std::size_t>(trial % 5)] += u(rng);
    REQUIRE(combine_dimensions(v) >= before);
  }
}

TEST_CASE("threshold calibration") {
  auto t = calibrate_threshold(std::vector<double>{1, 2, 3});
  CHECK(t.default_value == 2.0);
  CHECK(t.loose == 3.0);
  CHECK(t.tight == 1.0);
  t = calibrate_threshold(std::vector<double>{0.37, 0.37, 0.37});
  CHECK(t.default_value == doctest::Approx(0.4));
  CHECK(t.loose == doctest::Approx(0.4));
  CHECK(t.tight == doctest::Approx(0.4));
  CHECK(round_to_one_sig_fig(0.047) == doctest::Approx(0.05));
  CHECK(round_to_one_sig_fig(1234.0) == 1000.0);
  CHECK(round_to_one_sig_fig(-0.26) == doctest::Approx(-0.3));
  CHECK(round_to_one_sig_fig(0.0) == 0.0);
  CHECK_THROWS(calibrate_threshold(std::vector<double>{1.0}));
}

TEST_CASE("scorers share one polarity") {
  std::mt19937_64 rng(10);
  const auto train = random_exp(rng, 60, 1.0);
  const auto near = random_exp(rng, 60, 1.0);
  const auto far = random_exp(rng, 60, 4.0);
  for (auto kind : {ScorerKind::binseg, ScorerKind::pearson, ScorerKind::kpi_threshold}) {
    ScorerParams p;
    p.kind = kind;
    const auto s = make_scorer(p);
    CHECK(scorer_kind_from_string(to_string(kind)) == kind);
    std::vector<double> v;
    const double d = s->distance(train, near, &v);
    if (kind != ScorerKind::kpi_threshold) {
      CHECK(v.size() == 12);
      CHECK(d == doctest::Approx(combine_dimensions(v)));
    }
    for (double thr : {d - 1e-9, d, d + 1e-9}) {
      const auto rep = s->assess(train, near, thr, "pi");
      CHECK(rep.compatible == (rep.distance <= thr));
    }
  }
  ScorerParams bg;
  const auto s = make_scorer(bg);
  CHECK(s->distance(train, near) < s->distance(train, far));

  ScorerParams kt;
  kt.kind = ScorerKind::kpi_threshold;
  CHECK(make_scorer(kt)->distance_threshold(3.0) == -3.0);
  CHECK(scorer_kind_from_string("BG") == ScorerKind::binseg);
  CHECK_THROWS(scorer_kind_from_string("dino"));
}

TEST_CASE("compat log rows") {
  std::ostringstream os;
  write_compat_log_header(os);
  CompatReport r{"pi_a", "task_1", 0.25, {}, true, 0.3};
  append_compat_log(os, 2, ScorerKind::binseg, r);
  const std::string s = os.str();
  CHECK(s.find("iteration,policy_id,task_id,kind,distance,threshold,compatible") == 0);
  CHECK(s.find("2,pi_a,task_1,binseg,0.25,") != std::string::npos);
}
