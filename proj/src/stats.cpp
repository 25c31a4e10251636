#include "gaitscale/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "gaitscale/error.hpp"
#include "gaitscale/rng.hpp"

namespace gaitscale::stats {

namespace {

struct RankedDiffs {
  std::vector<int> twice_rank;  // mid-ranks doubled so they stay integral
  std::vector<int> tie_sizes;
  std::vector<bool> positive;
};

RankedDiffs rank_nonzero(std::span<const double> diffs) {
  std::vector<double> nz;
  for (double d : diffs) {
    if (!std::isfinite(d)) fail(ErrorKind::InvalidConfig, "non-finite difference");
    if (d != 0.0) nz.push_back(d);
  }
  const size_t n = nz.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return std::abs(nz[a]) < std::abs(nz[b]); });
  RankedDiffs r;
  r.twice_rank.resize(n);
  r.positive.resize(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && std::abs(nz[order[j + 1]]) == std::abs(nz[order[i]])) ++j;
    // ranks i+1 .. j+1 share their mean; doubled: (i+1) + (j+1)
    const int twice = static_cast<int>(i + j + 2);
    for (size_t k = i; k <= j; ++k) {
      r.twice_rank[order[k]] = twice;
    }
    r.tie_sizes.push_back(static_cast<int>(j - i + 1));
    i = j + 1;
  }
  for (size_t k = 0; k < n; ++k) {
    r.positive[k] = nz[k] > 0;
  }
  return r;
}

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

TestResult wilcoxon_signed_rank_one_sided(std::span<const double> diffs) {
  const RankedDiffs r = rank_nonzero(diffs);
  const int n = static_cast<int>(r.twice_rank.size());
  if (n == 0) fail(ErrorKind::AllZeroDiffs, "every difference is zero");

  int twice_w = 0;
  for (int k = 0; k < n; ++k) {
    if (r.positive[k]) twice_w += r.twice_rank[k];
  }
  TestResult out;
  out.n = n;
  out.statistic = twice_w / 2.0;

  if (n <= kExactWilcoxonMax) {
    // Count sign patterns by their doubled W+ (subset-sum over doubled ranks).
    const int total = std::accumulate(r.twice_rank.begin(), r.twice_rank.end(), 0);
    std::vector<double> ways(static_cast<size_t>(total) + 1, 0.0);
    ways[0] = 1.0;
    for (int rank : r.twice_rank) {
      for (int s = total; s >= rank; --s) ways[s] += ways[s - rank];
    }
    double tail = 0.0;
    for (int s = twice_w; s <= total; ++s) tail += ways[s];
    out.p_value = tail / std::ldexp(1.0, n);
    out.method = TestMethod::Exact;
  } else {
    const double nn = n;
    const double mean = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    for (int t : r.tie_sizes) var -= (static_cast<double>(t) * t * t - t) / 48.0;
    const double z = (out.statistic - mean - 0.5) / std::sqrt(var);
    out.p_value = normal_upper_tail(z);
    out.method = TestMethod::Approx;
  }
  out.p_value = std::clamp(out.p_value, 0.0, 1.0);
  return out;
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::LengthMismatch, "pearson_r needs paired samples");
  if (x.size() < 3) fail(ErrorKind::TooFewPoints, "pearson_r needs at least 3 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) fail(ErrorKind::ConstantInput, "pearson_r of a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double ols_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) fail(ErrorKind::LengthMismatch, "ols_slope needs paired samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) fail(ErrorKind::DegenerateX, "x has zero variance");
  return sxy / sxx;
}

std::pair<double, double> LinearFit::band(double x) const {
  const double half = t_crit * residual_sd * std::sqrt(1.0 / n + (x - x_mean) * (x - x_mean) / sxx);
  return {predict(x) - half, predict(x) + half};
}

LinearFit linfit_ci(std::span<const double> x, std::span<const double> y, double confidence) {
  if (x.size() != y.size()) fail(ErrorKind::LengthMismatch, "linfit_ci needs paired samples");
  if (!(confidence > 0.0 && confidence < 1.0)) fail(ErrorKind::InvalidConfig, "confidence must be in (0,1)");
  if (x.size() < 2) fail(ErrorKind::InsufficientDf, "linfit_ci needs at least 3 points");
  LinearFit f;
  f.n = static_cast<int>(x.size());
  f.confidence = confidence;
  f.x_mean = std::accumulate(x.begin(), x.end(), 0.0) / f.n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / f.n;
  double sxy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    f.sxx += (x[i] - f.x_mean) * (x[i] - f.x_mean);
    sxy += (x[i] - f.x_mean) * (y[i] - my);
  }
  if (f.sxx == 0.0) fail(ErrorKind::DegenerateX, "x has zero variance");
  f.df = f.n - 2;
  if (f.df < 1) fail(ErrorKind::InsufficientDf, "two points leave no residual degrees of freedom");
  f.slope = sxy / f.sxx;
  f.intercept = my - f.slope * f.x_mean;
  double sse = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - f.predict(x[i]);
    sse += e * e;
  }
  f.residual_sd = std::sqrt(sse / f.df);
  f.slope_se = f.residual_sd / std::sqrt(f.sxx);
  const boost::math::students_t dist(f.df);
  f.t_crit = boost::math::quantile(dist, 0.5 + confidence / 2.0);
  f.slope_lo = f.slope - f.t_crit * f.slope_se;
  f.slope_hi = f.slope + f.t_crit * f.slope_se;
  return f;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) fail(ErrorKind::TooFewPoints, "quantile of empty data");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BootstrapResult bootstrap_slope(std::span<const double> x, std::span<const double> y, int replicates,
                                std::uint64_t seed) {
  if (x.size() != y.size()) fail(ErrorKind::LengthMismatch, "bootstrap needs paired samples");
  if (x.size() < 5) fail(ErrorKind::TooFewPairs, "bootstrap needs at least 5 pairs");
  if (replicates < 1) fail(ErrorKind::InvalidConfig, "replicate count must be positive");
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) {
    fail(ErrorKind::DegenerateX, "x has zero variance");
  }
  const size_t n = x.size();
  BootstrapResult out;
  out.seed = seed;
  out.replicates.resize(static_cast<size_t>(replicates));
  std::vector<double> bx(n), by(n);
  for (int b = 0; b < replicates; ++b) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(b)}));
    std::uniform_int_distribution<size_t> pick(0, n - 1);
    for (;;) {
      for (size_t i = 0; i < n; ++i) {
        const size_t k = pick(rng);
        bx[i] = x[k];
        by[i] = y[k];
      }
      if (std::any_of(bx.begin(), bx.end(), [&](double v) { return v != bx[0]; })) break;
    }
    out.replicates[b] = ols_slope(bx, by);
  }
  std::vector<double> sorted = out.replicates;
  std::sort(sorted.begin(), sorted.end());
  out.median = quantile_sorted(sorted, 0.5);
  out.q25 = quantile_sorted(sorted, 0.25);
  out.q75 = quantile_sorted(sorted, 0.75);
  const double iqr = out.q75 - out.q25;
  const double lo_fence = out.q25 - 1.5 * iqr;
  const double hi_fence = out.q75 + 1.5 * iqr;
  out.whisker_lo = *std::find_if(sorted.begin(), sorted.end(), [&](double v) { return v >= lo_fence; });
  out.whisker_hi = *std::find_if(sorted.rbegin(), sorted.rend(), [&](double v) { return v <= hi_fence; });
  return out;
}

}  // namespace gaitscale::stats
