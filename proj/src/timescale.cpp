#include "gaitscale/timescale.hpp"

#include <algorithm>
#include <cmath>

#include "gaitscale/error.hpp"

namespace gaitscale::ts {

namespace {

void check_grid(std::span<const double> phases, std::span<const double> curve) {
  if (phases.size() != curve.size() || phases.empty()) fail(ErrorKind::GridMismatch, "curve does not match its phase grid");
}

}  // namespace

std::vector<double> delta_r2(std::span<const double> modality, std::span<const double> baseline) {
  if (modality.size() != baseline.size()) fail(ErrorKind::GridMismatch, "modality and baseline curves differ in length");
  std::vector<double> out(modality.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = modality[i] - baseline[i];
  return out;
}

double intercept(std::span<const double> phases, std::span<const double> curve) {
  check_grid(phases, curve);
  if (phases.front() != 0.0) fail(ErrorKind::GridMismatch, "phase grid does not start at 0");
  return curve.front();
}

Peak peak_delta_r2(std::span<const double> phases, std::span<const double> delta) {
  check_grid(phases, delta);
  const auto it = std::max_element(delta.begin(), delta.end());
  const auto i = static_cast<size_t>(it - delta.begin());
  return {phases[i], *it};
}

std::optional<double> onset_phase(std::span<const double> phases, const std::vector<std::vector<double>>& per_fold,
                                  double peak_phase, const OnsetOptions& options) {
  if (per_fold.size() != phases.size()) fail(ErrorKind::GridMismatch, "fold values do not match the phase grid");
  for (size_t i = 0; i < phases.size() && phases[i] <= peak_phase + 1e-12; ++i) {
    if (per_fold[i].size() < 5) fail(ErrorKind::TooFewFolds, "onset test needs at least 5 folds per phase");
    std::vector<double> d(per_fold[i].size());
    for (size_t k = 0; k < d.size(); ++k) d[k] = per_fold[i][k] - options.threshold;
    if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) continue;
    if (stats::wilcoxon_signed_rank_one_sided(d).p_value < options.alpha) return phases[i];
  }
  return std::nullopt;
}

double breakpoint(std::span<const double> phases, std::span<const double> curve) {
  check_grid(phases, curve);
  const size_t n = phases.size();
  if (n < 2) return phases.front();
  std::vector<double> slope(n - 1);
  double scale = 0.0;
  for (size_t i = 0; i + 1 < n; ++i) {
    slope[i] = (curve[i + 1] - curve[i]) / (phases[i + 1] - phases[i]);
    scale = std::max(scale, std::abs(slope[i]));
  }
  const double r = (curve[n - 1] - curve[0]) / (phases[n - 1] - phases[0]);
  const double tol = 1e-9 * std::max(scale, std::abs(r));
  const auto m = static_cast<size_t>(std::max_element(slope.begin(), slope.end()) - slope.begin());
  for (size_t i = m; i-- > 0;) {
    if (slope[i] < r - tol) return phases[i + 1];
  }
  return 0.0;
}

double swing_initiation(std::span<const double> phases, std::span<const double> velocity, double fraction) {
  check_grid(phases, velocity);
  const auto p = static_cast<size_t>(std::max_element(velocity.begin(), velocity.end()) - velocity.begin());
  if (!(velocity[p] > 0.0)) fail(ErrorKind::NoPeak, "fore-aft velocity is never positive");
  const double cut = fraction * velocity[p];
  for (size_t i = p; i-- > 0;) {
    if (velocity[i] < cut) return phases[i + 1];
  }
  return 0.0;
}

std::string significance_stars(double p) {
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "n.s.";
}

PairedComparison compare_onset_vs_swing(std::span<const double> fp_timing, std::span<const double> swing) {
  if (fp_timing.size() != swing.size()) fail(ErrorKind::ShapeMismatch, "timing series are not paired");
  if (fp_timing.size() < 5) fail(ErrorKind::TooFewPairs, "need at least 5 paired trials");
  std::vector<double> d(fp_timing.size());
  for (size_t i = 0; i < d.size(); ++i) d[i] = fp_timing[i] - swing[i];
  PairedComparison out;
  if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) {
    out.test.p_value = 1.0;
  } else {
    out.test = stats::wilcoxon_signed_rank_one_sided(d);
  }
  out.stars = significance_stars(out.test.p_value);
  return out;
}

TimescaleReport analyze(const std::string& modality, int axis, const cv::EvalCurve& curve,
                        const cv::EvalCurve& baseline, const OnsetOptions& options) {
  if (axis < 0 || axis > 1) fail(ErrorKind::InvalidConfig, "axis must be 0 (ML) or 1 (AP)");
  if (curve.phases != baseline.phases) fail(ErrorKind::GridMismatch, "modality and baseline grids differ");
  const auto a = static_cast<size_t>(axis);
  TimescaleReport rep;
  rep.modality = modality;
  rep.axis = axis;
  rep.phases = curve.phases;
  rep.intercept = intercept(curve.phases, curve.r2[a]);
  rep.delta_r2 = delta_r2(curve.r2[a], baseline.r2[a]);
  rep.peak = peak_delta_r2(curve.phases, rep.delta_r2);

  const auto& mf = curve.fold_r2[a];
  const auto& bf = baseline.fold_r2[a];
  if (mf.size() != curve.phases.size() || bf.size() != mf.size()) fail(ErrorKind::GridMismatch, "fold curves missing");
  std::vector<std::vector<double>> fold_delta(mf.size());
  for (size_t i = 0; i < mf.size(); ++i) fold_delta[i] = delta_r2(mf[i], bf[i]);
  rep.onset = onset_phase(curve.phases, fold_delta, rep.peak.phase, options);

  rep.breakpoint_raw = breakpoint(baseline.phases, baseline.r2[a]);
  const auto& smooth = baseline.smoothed[a];
  rep.breakpoint = smooth.size() == baseline.phases.size() ? breakpoint(baseline.phases, smooth) : rep.breakpoint_raw;
  return rep;
}

}  // namespace gaitscale::ts
