#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace gaitscale::stats {

enum class TestMethod { Exact, Approx };

struct TestResult {
  double statistic = 0.0;  // W+
  double p_value = 1.0;
  int n = 0;  // nonzero differences used
  TestMethod method = TestMethod::Exact;
};

inline constexpr int kExactWilcoxonMax = 12;

/// One-sided signed-rank test of H1: median(diffs) > 0. Zeros are dropped,
/// ties get mid-ranks.
TestResult wilcoxon_signed_rank_one_sided(std::span<const double> diffs);

double pearson_r(std::span<const double> x, std::span<const double> y);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double slope_lo = 0.0;
  double slope_hi = 0.0;
  double confidence = 0.95;
  int df = 0;
  double residual_sd = 0.0;
  double x_mean = 0.0;
  double sxx = 0.0;
  double t_crit = 0.0;
  int n = 0;

  double predict(double x) const { return intercept + slope * x; }
  /// Pointwise confidence band for the mean response at x.
  std::pair<double, double> band(double x) const;
};

LinearFit linfit_ci(std::span<const double> x, std::span<const double> y, double confidence = 0.95);

/// Least-squares slope only; throws DegenerateX when x has no spread.
double ols_slope(std::span<const double> x, std::span<const double> y);

struct BootstrapResult {
  std::vector<double> replicates;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double whisker_lo = 0.0;
  double whisker_hi = 0.0;
  std::uint64_t seed = 0;
};

/// Resamples (x, y) pairs with replacement and records the OLS slope per
/// replicate. Resamples without x spread are redrawn.
BootstrapResult bootstrap_slope(std::span<const double> x, std::span<const double> y, int replicates = 2000,
                                std::uint64_t seed = 0);

/// Linear-interpolation quantile of sorted data (R type 7).
double quantile_sorted(std::span<const double> sorted, double q);

}  // namespace gaitscale::stats
