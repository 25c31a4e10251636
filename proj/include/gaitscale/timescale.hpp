#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gaitscale/crossval.hpp"
#include "gaitscale/stats.hpp"

namespace gaitscale::ts {

/// R2_modality - R2_baseline, pointwise.
std::vector<double> delta_r2(std::span<const double> modality, std::span<const double> baseline);

/// Curve value at phi = 0.
double intercept(std::span<const double> phases, std::span<const double> curve);

struct Peak {
  double phase = 0.0;
  double value = 0.0;

  bool operator==(const Peak&) const = default;
};

/// argmax, earliest phase on ties.
Peak peak_delta_r2(std::span<const double> phases, std::span<const double> delta);

struct OnsetOptions {
  double threshold = 0.05;
  double alpha = 0.05;
};

/// Earliest phase, up to and including `peak_phase`, where the per-fold
/// values exceed the threshold by a one-sided signed-rank test.
/// per_fold[i] holds the fold values at phases[i].
std::optional<double> onset_phase(std::span<const double> phases, const std::vector<std::vector<double>>& per_fold,
                                  double peak_phase, const OnsetOptions& options = {});

/// Phase after the last slope below the average slope, tracing back from the
/// steepest segment; 0 if there is none.
double breakpoint(std::span<const double> phases, std::span<const double> curve);

/// Phase after the last sample below 5% of peak velocity, tracing back from the peak.
double swing_initiation(std::span<const double> phases, std::span<const double> velocity, double fraction = 0.05);

struct PairedComparison {
  stats::TestResult test;
  std::string stars;  // "**", "*" or "n.s."
};

/// One-sided signed-rank test of (fp_timing - swing) > 0.
PairedComparison compare_onset_vs_swing(std::span<const double> fp_timing, std::span<const double> swing);

std::string significance_stars(double p);

struct TimescaleReport {
  std::string modality;
  int axis = 0;  // 0 ML, 1 AP
  double intercept = 0.0;
  std::vector<double> phases;
  std::vector<double> delta_r2;
  Peak peak;
  std::optional<double> onset;
  double breakpoint = 0.0;      // baseline curve, smoothed
  double breakpoint_raw = 0.0;  // baseline curve, raw
  std::optional<double> swing_initiation;
  double critical = 0.0;

  bool operator==(const TimescaleReport&) const = default;
};

/// Timescale quantities of a modality curve against the swing-foot baseline on one axis.
TimescaleReport analyze(const std::string& modality, int axis, const cv::EvalCurve& curve,
                        const cv::EvalCurve& baseline, const OnsetOptions& options = {});

}  // namespace gaitscale::ts
