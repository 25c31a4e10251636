#pragma once

#include <Eigen/Dense>

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gaitscale/preprocess.hpp"
#include "gaitscale/train.hpp"

namespace gaitscale {

inline constexpr int kPhaseCount = 21;
inline constexpr int kHistoryRows = 2 * kPhasesPerCycle + 1;  // 41 rows at phi = 0

/// Grid index i for phi = i/20; throws InvalidPhase when phi is off the grid.
int phase_index(double phi);
double phase_value(int index);

enum class ModalityKind { Com, FullBody, SwingFoot, Gaze };
std::string_view to_string(ModalityKind kind);
ModalityKind parse_modality(std::string_view name);

struct ModalitySpec {
  ModalityKind kind = ModalityKind::Com;
  std::vector<std::string> com_markers{"pelvis"};
  std::vector<std::string> full_body_markers;  // empty: every marker in the trial
  std::array<std::vector<std::string>, 2> swing_markers{{{"foot_l"}, {"foot_r"}}};
  bool include_velocity = true;

  /// Feature count m for a trial laid out as `layout`.
  int features(const ChannelLayout& layout) const;
};

struct FootPlacement {
  double ml = 0.0;
  double ap = 0.0;
};

struct TargetBounds {
  double ml = 1.0;
  double ap = 3.0;
};

struct Sample {
  Eigen::MatrixXd S;  // (41 + 20 phi) x m
  int trial = 0;
  int flag = 0;  // 0 left, 1 right heel-strike
  double phi = 0.0;
  FootPlacement y;
  int strike_frame = 0;
};

/// Striking-foot contact minus the opposite foot's previous contact, read from
/// the belt-adjusted unfiltered positions of the named foot markers' centroid.
FootPlacement foot_placement_target(const KinematicSeries& series, std::span<const HeelStrikeEvent> events,
                                    const HeelStrikeEvent& strike,
                                    const std::array<std::vector<std::string>, 2>& foot_markers);

/// Feature columns of `rows` (phase rows in `layout` order) for one modality.
Eigen::MatrixXd modality_features(const ChannelLayout& layout, const Eigen::MatrixXd& rows,
                                  const ModalitySpec& modality, Foot striking);

struct SamplingReport {
  int candidates = 0;
  int insufficient_history = 0;
  int touches_rejected = 0;
  int out_of_bounds = 0;
  int emitted = 0;
};

/// One sample per heel strike with three valid same-foot cycles ending at it.
std::vector<Sample> build_samples(std::span<const ProcessedTrial> trials, const ModalitySpec& modality, double phi,
                                  const TargetBounds& bounds = {}, SamplingReport* report = nullptr);

/// Column means and standard deviations per trial, with a pooled fallback for
/// trials absent from the fitting set. Zero spread maps to unit scale.
class Standardizer {
 public:
  struct Moments {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;
  };

  static Standardizer fit(std::span<const Sample> samples);
  static Standardizer from_moments(std::map<int, Moments> per_trial, Moments pooled);
  void apply(std::vector<Sample>& samples) const;
  Eigen::MatrixXd transform(const Eigen::MatrixXd& S, int trial) const;

  const std::map<int, Moments>& per_trial() const { return per_trial_; }
  const Moments& pooled() const { return pooled_; }

 private:
  std::map<int, Moments> per_trial_;
  Moments pooled_;
};

/// Global affine map of the two targets to zero mean and unit variance.
struct TargetScaler {
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> scale{1.0, 1.0};

  static TargetScaler fit(std::span<const Sample> samples);
  FootPlacement forward(const FootPlacement& y) const;
  FootPlacement inverse(const FootPlacement& y) const;
};

grad::TensorDataset to_tensor(std::span<const Sample> samples, const TargetScaler& scaler = {});

/// Delimited dump: flattened S (row-major), then v, l, phi, y_ml, y_ap.
std::string samples_dump(std::span<const Sample> samples, char delimiter = ',');

}  // namespace gaitscale
