#pragma once

// Compatibility between a policy's training experience and a test experience.
// Every scorer reports a distance where lower means more compatible, so one
// comparison `distance <= threshold` serves all of them.

#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "taskbank/rl.hpp"

namespace taskbank::compat {

enum class ScorerKind { binseg, pearson, kpi_threshold };

std::string to_string(ScorerKind k);
ScorerKind scorer_kind_from_string(const std::string& s);

struct ScorerParams {
  ScorerKind kind = ScorerKind::binseg;
  double window_fraction = 0.1;  // binseg junction window, fraction of T
  int min_seg = 10;              // binseg
  double chi_mbps = 1.0;         // kpi_threshold: passed to kpis()

  void validate() const;
};

// log1p, then standardise with a 1e-8 floor on the std.
std::vector<double> normalize_series(std::span<const double> x);

// Median pairwise |y_s - y_t| heuristic: gamma = 1 / (2 median^2). Falls back
// to the median of the non-zero distances, then to 1 for constant input.
double median_heuristic_gamma(std::span<const double> y);

// Cost of one segment under the RBF kernel with bandwidth gamma.
double rbf_cost(std::span<const double> segment, double gamma);

// Kernel segment costs over one series via 2-D prefix sums of the Gram matrix.
class KernelCost {
 public:
  KernelCost(std::span<const double> y, double gamma);
  // Cost of y[a..b).
  double cost(std::size_t a, std::size_t b) const;
  std::size_t size() const { return n_; }

 private:
  double block(std::size_t a, std::size_t b) const;
  std::size_t n_;
  std::vector<double> prefix_;  // (n+1) x (n+1)
};

// Gain curve of recursive binary segmentation. Entry t is the gain of
// splitting the enclosing segment at t; split points keep the gain they were
// chosen with and inadmissible positions are 0. Length is |y| + 1 so that t
// ranges over every boundary 0..T.
std::vector<double> binseg_gains(std::span<const double> y, int min_seg,
                                 double gamma);
std::vector<double> binseg_gains(std::span<const double> y, int min_seg);

struct Split {
  std::size_t t = 0;
  double gain = 0.0;
};
// First split of binary segmentation: argmax over admissible t of the gain.
Split binseg_root(std::span<const double> y, int min_seg, double gamma);

// Windowed junction gain of the concatenation, divided by its length.
double binseg_distance(std::span<const double> tau1, std::span<const double> tau2,
                       int min_seg = 10, double window_fraction = 0.1);

// sqrt(1 - r^2) on the common prefix; zero variance counts as r = 0.
double pearson_distance(std::span<const double> tau1,
                        std::span<const double> tau2);

struct KtResult {
  double distance = 0.0;  // -min_t G_min(t)
  bool compatible = false;
};
// Per-step G_min series form.
KtResult kpi_threshold_distance(std::span<const double> g_min_series,
                                double theta_mbps);
// Experience form; G_min is taken from the throughput block of each row.
KtResult kpi_threshold_distance(const rl::Experience& test, double theta_mbps,
                                double chi_mbps = 1.0);

double combine_dimensions(std::span<const double> per_dim);

struct Thresholds {
  double default_value = 0.0;
  double loose = 0.0;
  double tight = 0.0;
};
double round_to_one_sig_fig(double x);
// Median and sample standard deviation, each rounded to one significant figure.
Thresholds calibrate_threshold(std::span<const double> scores);

struct CompatReport {
  std::string policy_id;
  std::string task_id;
  double distance = 0.0;
  std::vector<double> per_dimension_scores;
  bool compatible = false;
  double threshold = 0.0;
};

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual ScorerKind kind() const = 0;
  // Distance plus the per-dimension vector it was combined from (empty for
  // kpi_threshold).
  virtual double distance(const rl::Experience& train, const rl::Experience& test,
                          std::vector<double>* per_dim = nullptr) const = 0;
  // Maps a user-facing threshold (Mbps for kpi_threshold) to distance units.
  virtual double distance_threshold(double configured) const { return configured; }

  CompatReport assess(const rl::Experience& train, const rl::Experience& test,
                      double distance_threshold, std::string policy_id) const;
};

std::unique_ptr<Scorer> make_scorer(const ScorerParams& params);

// compat_log.csv rows.
void write_compat_log_header(std::ostream& os);
void append_compat_log(std::ostream& os, int iteration, ScorerKind kind,
                       const CompatReport& r);

}  // namespace taskbank::compat
