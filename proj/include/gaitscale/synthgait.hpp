#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gaitscale/preprocess.hpp"
#include "gaitscale/trial.hpp"

namespace gaitscale::synth {

/// Scripted walker. Each heel strike j lands at
///   y_j = side_j + offset_v + B * c_j + eps_j
/// relative to the opposite foot's previous contact, where c_j ~ N(0,1) is a
/// scalar CoM state that appears in the pelvis vertical trace as a ramp
/// starting at phase phi_star of the final pre-strike stride.
struct SynthConfig {
  int n_trials = 8;
  int strides_per_trial = 200;
  double cadence_hz = 1.0 / 1.1;  // strides per second
  double fs = 100.0;
  double phi_star = 0.5;
  std::array<double, 2> gain{0.03, 0.0583};  // B: (ML, AP) per unit c
  double sigma_eps = 0.03;
  double sigma_v = 0.02;
  double step_length = 0.6;
  double step_width = 0.05;  // +w for right strikes, -w for left
  double com_amplitude = 0.02;  // pelvis vertical metres per unit c
  double ramp_half_width = 0.05;  // ramp spans 2x this, in stride phase
  double swing_fraction = 0.4;
  double swing_height = 0.08;
  int step_jitter_frames = 2;
  double marker_noise = 0.001;
  bool treadmill = true;
  bool with_gaze = true;
  bool with_knees = true;
  std::uint64_t seed = 1;

  void validate() const;
};

struct StrikeTruth {
  int index;
  Foot foot;
  int frame;
  double time;
  std::array<double, 2> target;
  double com_state;
  std::array<double, 2> noise;
  std::array<double, 2> offset;  // side term + trial offset
  std::array<double, 2> contact;  // ground-frame landing point
};

struct TrialTruth {
  int trial_id;
  std::array<double, 2> trial_offset;  // (o_ML, step_length + o_AP)
  std::vector<StrikeTruth> strikes;
};

struct SynthOutput {
  Dataset dataset;
  std::vector<TrialTruth> truth;
};

SynthOutput generate(const SynthConfig& config);

struct CeilingReport {
  std::array<double, 2> r2_max;       // 1 - sigma_eps^2 / Var(y), per axis
  std::array<double, 2> offset_only;  // R^2 from (trial, side) group means
  std::array<double, 2> target_variance;
  std::vector<std::array<double, 2>> per_trial_variance;
};

CeilingReport analytic_ceiling(const SynthConfig& config, const SynthOutput& output);
CeilingReport analytic_ceiling(const SynthConfig& config);

/// R^2 ceiling for an arbitrary target set: 1 - sigma^2 / Var(y), clamped to [0, 1].
double ceiling_r2(double sigma_eps, std::span<const double> targets);

/// Preprocess settings matching the generator's marker names.
PreprocessConfig preprocess_config();

std::string truth_csv(const TrialTruth& truth);
void write_sidecars(const SynthOutput& output, const std::filesystem::path& dir);

}  // namespace gaitscale::synth
