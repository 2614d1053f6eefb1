#include "taskbank/compat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace taskbank::compat {

std::string to_string(ScorerKind k) {
  switch (k) {
    case ScorerKind::binseg: return "binseg";
    case ScorerKind::pearson: return "pearson";
    case ScorerKind::kpi_threshold: return "kpi_threshold";
  }
  return "unknown";
}

ScorerKind scorer_kind_from_string(const std::string& s) {
  if (s == "binseg" || s == "BG") return ScorerKind::binseg;
  if (s == "pearson" || s == "PR") return ScorerKind::pearson;
  if (s == "kpi_threshold" || s == "KT") return ScorerKind::kpi_threshold;
  throw std::invalid_argument("unknown scorer kind: " + s);
}

void ScorerParams::validate() const {
  if (!(window_fraction > 0.0 && window_fraction <= 0.5))
    throw std::invalid_argument("scorer: window_fraction must be in (0, 0.5]");
  if (min_seg < 1) throw std::invalid_argument("scorer: min_seg must be >= 1");
  if (!(chi_mbps >= 0.0)) throw std::invalid_argument("scorer: chi must be >= 0");
}

namespace {

std::vector<double> standardize(std::vector<double> y) {
  if (y.empty()) return y;
  const double n = static_cast<double>(y.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / n), 1e-8);
  for (double& v : y) v = (v - mean) / sd;
  return y;
}

std::vector<double> log1p_all(std::span<const double> x) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= 0.0))
      throw std::invalid_argument("normalize_series: negative or NaN input");
    y[i] = std::log1p(x[i]);
  }
  return y;
}

double median_of(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lo);
  }
  return m;
}

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Distance on an already-normalized concatenation whose first part has
// length t1.
double junction_distance(std::span<const double> tau_bar, std::size_t t1,
                         int min_seg, double window_fraction) {
  const auto gains = binseg_gains(tau_bar, min_seg);
  const double T = static_cast<double>(tau_bar.size());
  const double half = window_fraction * T;
  const auto lo = static_cast<std::size_t>(
      std::max(0.0, std::floor(static_cast<double>(t1) - half)));
  const auto hi = static_cast<std::size_t>(
      std::min(T, std::ceil(static_cast<double>(t1) + half)));
  double best = 0.0;
  for (std::size_t t = lo; t <= hi; ++t) best = std::max(best, gains[t]);
  return best / T;
}

}  // namespace

std::vector<double> normalize_series(std::span<const double> x) {
  return standardize(log1p_all(x));
}

double median_heuristic_gamma(std::span<const double> y) {
  std::vector<double> d;
  d.reserve(y.size() * (y.size() - 1) / 2);
  for (std::size_t s = 0; s < y.size(); ++s)
    for (std::size_t t = s + 1; t < y.size(); ++t) d.push_back(std::abs(y[s] - y[t]));
  if (d.empty()) return 1.0;
  double med = median_of(d);
  if (med <= 0.0) {
    std::vector<double> pos;
    for (double v : d)
      if (v > 0.0) pos.push_back(v);
    if (pos.empty()) return 1.0;
    med = median_of(pos);
  }
  return 1.0 / (2.0 * med * med);
}

double rbf_cost(std::span<const double> segment, double gamma) {
  if (segment.empty()) throw std::invalid_argument("rbf_cost: empty segment");
  const double n = static_cast<double>(segment.size());
  double sum = 0.0;
  for (double a : segment)
    for (double b : segment) sum += std::exp(-gamma * (a - b) * (a - b));
  return n - sum / n;
}

KernelCost::KernelCost(std::span<const double> y, double gamma)
    : n_(y.size()), prefix_((n_ + 1) * (n_ + 1), 0.0) {
  const std::size_t w = n_ + 1;
  for (std::size_t i = 0; i < n_; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      const double d = y[i] - y[j];
      row += std::exp(-gamma * d * d);
      prefix_[(i + 1) * w + (j + 1)] = prefix_[i * w + (j + 1)] + row;
    }
  }
}

double KernelCost::block(std::size_t a, std::size_t b) const {
  const std::size_t w = n_ + 1;
  return prefix_[b * w + b] - prefix_[a * w + b] - prefix_[b * w + a] +
         prefix_[a * w + a];
}

double KernelCost::cost(std::size_t a, std::size_t b) const {
  if (b <= a || b > n_) throw std::invalid_argument("KernelCost: bad segment");
  const double len = static_cast<double>(b - a);
  return std::max(0.0, len - block(a, b) / len);
}

namespace {

// Best split of y[a..b); records every candidate gain when `gains` is given.
Split best_split(const KernelCost& cost, std::size_t a, std::size_t b, std::size_t m,
                 std::vector<double>* gains) {
  const double whole = cost.cost(a, b);
  Split best{a + m, -std::numeric_limits<double>::infinity()};
  for (std::size_t t = a + m; t <= b - m; ++t) {
    const double g = whole - cost.cost(a, t) - cost.cost(t, b);
    if (gains) (*gains)[t] = g;
    if (g > best.gain) best = {t, g};
  }
  return best;
}

std::size_t checked_min_seg(std::span<const double> y, int min_seg) {
  if (min_seg < 1) throw std::invalid_argument("binseg: min_seg < 1");
  const auto m = static_cast<std::size_t>(min_seg);
  if (y.size() < 2 * m) throw std::invalid_argument("binseg: series shorter than 2*min_seg");
  return m;
}

}  // namespace

Split binseg_root(std::span<const double> y, int min_seg, double gamma) {
  const auto m = checked_min_seg(y, min_seg);
  return best_split(KernelCost(y, gamma), 0, y.size(), m, nullptr);
}

std::vector<double> binseg_gains(std::span<const double> y, int min_seg,
                                 double gamma) {
  const auto m = checked_min_seg(y, min_seg);
  const KernelCost cost(y, gamma);
  std::vector<double> gains(y.size() + 1, 0.0);

  auto split = [&](auto&& self, std::size_t a, std::size_t b) -> void {
    if (b - a < 2 * m) return;
    const auto best = best_split(cost, a, b, m, &gains);
    self(self, a, best.t);
    self(self, best.t, b);
  };
  split(split, 0, y.size());
  return gains;
}

std::vector<double> binseg_gains(std::span<const double> y, int min_seg) {
  return binseg_gains(y, min_seg, median_heuristic_gamma(y));
}

double binseg_distance(std::span<const double> tau1, std::span<const double> tau2,
                       int min_seg, double window_fraction) {
  if (tau1.empty() || tau2.empty())
    throw std::invalid_argument("binseg_distance: empty series");
  const auto tau_bar = standardize(concat(tau1, tau2));
  return junction_distance(tau_bar, tau1.size(), min_seg, window_fraction);
}

double pearson_distance(std::span<const double> tau1,
                        std::span<const double> tau2) {
  const std::size_t n = std::min(tau1.size(), tau2.size());
  if (n < 2) throw std::invalid_argument("pearson_distance: length < 2");
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += tau1[i];
    mb += tau2[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = tau1[i] - ma, b = tau2[i] - mb;
    sab += a * b;
    saa += a * a;
    sbb += b * b;
  }
  double r = 0.0;
  if (saa > 0.0 && sbb > 0.0) r = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  return std::sqrt(std::max(0.0, 1.0 - r * r));
}

KtResult kpi_threshold_distance(std::span<const double> g_min_series,
                                double theta_mbps) {
  if (g_min_series.empty())
    throw std::invalid_argument("kpi_threshold_distance: empty series");
  const double m = *std::min_element(g_min_series.begin(), g_min_series.end());
  return {-m, -m <= -theta_mbps};
}

KtResult kpi_threshold_distance(const rl::Experience& test, double theta_mbps,
                                double chi_mbps) {
  test.validate();
  if (test.dim() % 3 != 0)
    throw std::invalid_argument("kpi_threshold_distance: row is not 3*n_cells");
  const std::size_t n = test.dim() / 3;
  std::vector<double> g_min;
  g_min.reserve(test.length());
  for (const auto& row : test.states)
    g_min.push_back(
        netsim::kpis(std::span<const double>(row).subspan(2 * n, n), chi_mbps).g_min);
  return kpi_threshold_distance(g_min, theta_mbps);
}

double combine_dimensions(std::span<const double> per_dim) {
  if (per_dim.empty()) throw std::invalid_argument("combine_dimensions: empty");
  double sq = 0.0;
  for (double v : per_dim) sq += v * v;
  return std::sqrt(sq);
}

double round_to_one_sig_fig(double x) {
  if (x == 0.0 || !std::isfinite(x)) return x;
  const double e = std::floor(std::log10(std::abs(x)));
  // Dividing by 10^-e for negative exponents keeps results like 0.05 exact.
  if (e < 0) {
    const double inv = std::pow(10.0, -e);
    return std::round(x * inv) / inv;
  }
  const double scale = std::pow(10.0, e);
  return std::round(x / scale) * scale;
}

Thresholds calibrate_threshold(std::span<const double> scores) {
  if (scores.size() < 2)
    throw std::invalid_argument("calibrate_threshold: need at least 2 scores");
  std::vector<double> v(scores.begin(), scores.end());
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const double med = median_of(v);
  return {round_to_one_sig_fig(med), round_to_one_sig_fig(med + sd),
          round_to_one_sig_fig(med - sd)};
}

CompatReport Scorer::assess(const rl::Experience& train, const rl::Experience& test,
                            double threshold, std::string policy_id) const {
  CompatReport r;
  r.policy_id = std::move(policy_id);
  r.task_id = test.task_id;
  r.distance = distance(train, test, &r.per_dimension_scores);
  r.threshold = threshold;
  r.compatible = r.distance <= threshold;
  return r;
}

namespace {

void check_pair(const rl::Experience& a, const rl::Experience& b) {
  a.validate();
  b.validate();
  if (a.dim() != b.dim())
    throw std::invalid_argument("scorer: experiences differ in dimension");
}

class BinsegScorer final : public Scorer {
 public:
  explicit BinsegScorer(ScorerParams p) : p_(p) {}
  ScorerKind kind() const override { return ScorerKind::binseg; }
  double distance(const rl::Experience& train, const rl::Experience& test,
                  std::vector<double>* per_dim) const override {
    check_pair(train, test);
    std::vector<double> v;
    for (std::size_t d = 0; d < train.dim(); ++d) {
      const auto tau_bar = normalize_series(concat(train.column(d), test.column(d)));
      v.push_back(junction_distance(tau_bar, train.length(), p_.min_seg,
                                    p_.window_fraction));
    }
    const double dist = combine_dimensions(v);
    if (per_dim) *per_dim = std::move(v);
    return dist;
  }

 private:
  ScorerParams p_;
};

class PearsonScorer final : public Scorer {
 public:
  ScorerKind kind() const override { return ScorerKind::pearson; }
  double distance(const rl::Experience& train, const rl::Experience& test,
                  std::vector<double>* per_dim) const override {
    check_pair(train, test);
    std::vector<double> v;
    for (std::size_t d = 0; d < train.dim(); ++d)
      v.push_back(pearson_distance(log1p_all(train.column(d)),
                                   log1p_all(test.column(d))));
    const double dist = combine_dimensions(v);
    if (per_dim) *per_dim = std::move(v);
    return dist;
  }
};

class KpiThresholdScorer final : public Scorer {
 public:
  explicit KpiThresholdScorer(ScorerParams p) : p_(p) {}
  ScorerKind kind() const override { return ScorerKind::kpi_threshold; }
  double distance(const rl::Experience&, const rl::Experience& test,
                  std::vector<double>* per_dim) const override {
    if (per_dim) per_dim->clear();
    return kpi_threshold_distance(test, 0.0, p_.chi_mbps).distance;
  }
  double distance_threshold(double theta_mbps) const override { return 0.0 - theta_mbps; }

 private:
  ScorerParams p_;
};

}  // namespace

std::unique_ptr<Scorer> make_scorer(const ScorerParams& params) {
  params.validate();
  switch (params.kind) {
    case ScorerKind::binseg: return std::make_unique<BinsegScorer>(params);
    case ScorerKind::pearson: return std::make_unique<PearsonScorer>();
    case ScorerKind::kpi_threshold: return std::make_unique<KpiThresholdScorer>(params);
  }
  throw std::invalid_argument("make_scorer: unknown kind");
}

void write_compat_log_header(std::ostream& os) {
  os << "iteration,policy_id,task_id,kind,distance,threshold,compatible\n";
}

void append_compat_log(std::ostream& os, int iteration, ScorerKind kind,
                       const CompatReport& r) {
  char buf[64];
  os << iteration << ',' << r.policy_id << ',' << r.task_id << ',' << to_string(kind);
  std::snprintf(buf, sizeof buf, ",%.10g,%.10g,", r.distance, r.threshold);
  os << buf << (r.compatible ? 1 : 0) << '\n';
}

}  // namespace taskbank::compat
