#pragma once

#include <Eigen/Dense>

#include <array>
#include <span>
#include <string>
#include <vector>

#include "gaitscale/trial.hpp"

namespace gaitscale {

enum class Foot { Left = 0, Right = 1 };
inline Foot opposite(Foot f) { return f == Foot::Left ? Foot::Right : Foot::Left; }
std::string_view to_string(Foot f);

inline constexpr int kPhasesPerCycle = 20;

struct HeelStrikeEvent {
  Foot foot = Foot::Left;
  int frame = 0;
  double time = 0.0;
};

/// One second-order section, a0 normalized to 1: b0 b1 b2 a1 a2.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

/// Low-pass Butterworth as cascaded sections (bilinear transform, prewarped at fc).
std::vector<Biquad> butterworth_lowpass_sections(double fs, double fc, int order);

/// Forward-backward Butterworth low-pass with odd reflection padding of
/// 3*order samples and steady-state initial conditions.
std::vector<double> butterworth_lowpass_zerolag(std::span<const double> signal, double fs, double fc = 6.0,
                                                int order = 4);

/// Fourth-order centered differences inside, one-sided second-order stencils
/// at the two outermost samples of each end.
std::vector<double> finite_difference_velocity(std::span<const double> positions, double dt);

std::vector<double> belt_speed_adjust(std::span<const double> y, double v, std::span<const double> t);

struct HeelStrikeConfig {
  double min_separation_s = 0.4;
  double prominence_fraction = 0.1;
  double min_duration_s = 2.0;
};

/// Maxima of foot_y - pelvis_y, filtered by prominence and refractory period.
std::vector<HeelStrikeEvent> detect_heel_strikes(std::span<const double> foot_y,
                                                 std::span<const double> pelvis_y, double fs,
                                                 Foot foot = Foot::Left,
                                                 const HeelStrikeConfig& config = {});

/// Column layout of a cycle's phase matrix: per marker (name order), per axis,
/// position then velocity; gaze x, y appended when present.
struct ChannelLayout {
  std::vector<std::string> markers;
  bool has_gaze = false;

  int channels() const { return static_cast<int>(markers.size()) * 6 + (has_gaze ? 2 : 0); }
  int marker_index(const std::string& name) const;
  int column(const std::string& marker, int axis, bool velocity) const;
  int gaze_column(int axis) const;
};

struct GaitCycle {
  Foot foot = Foot::Left;
  HeelStrikeEvent start;
  HeelStrikeEvent end;
  Eigen::MatrixXd phases;    // 20 x channels, phase k/20 for k = 0..19
  Eigen::RowVectorXd terminal;  // channels at the end heel-strike (phase 1)
  bool valid = true;

  double duration() const { return end.time - start.time; }
};

/// Belt-adjusted, filtered kinematics with velocities.
struct KinematicSeries {
  int id = 0;
  double fs = 0.0;
  Task task = Task::TreadmillWalk;
  std::vector<double> time;
  std::map<std::string, Trajectory> raw_position;  // belt-adjusted, unfiltered
  std::map<std::string, Trajectory> position;
  std::map<std::string, Trajectory> velocity;
  std::optional<GazeTrack> gaze;
};

std::vector<GaitCycle> segment_cycles(const KinematicSeries& series, const ChannelLayout& layout,
                                      std::span<const HeelStrikeEvent> events);

struct RejectionConfig {
  double stance_lift_m = 0.03;
  double duration_low = 0.5;
  double duration_high = 1.5;
};

struct Rejection {
  int cycle_index;
  Foot foot;
  std::string reason;  // "stance_lift" or "duration"
};

struct RejectionOutcome {
  std::vector<GaitCycle> kept;
  std::vector<Rejection> log;
};

/// Marks and removes anomalous cycles. `foot_markers` names the left and right
/// foot markers whose vertical position defines stance.
RejectionOutcome reject_anomalous_cycles(std::vector<GaitCycle> cycles, const KinematicSeries& series,
                                         const std::array<std::string, 2>& foot_markers,
                                         const RejectionConfig& config = {});

std::string rejection_log_csv(std::span<const Rejection> log);

struct PreprocessConfig {
  double cutoff_hz = 6.0;
  int filter_order = 4;
  std::array<std::string, 2> foot_markers{"foot_l", "foot_r"};
  std::vector<std::string> pelvis_markers{"pelvis"};
  HeelStrikeConfig heel_strike;
  RejectionConfig rejection;
};

struct ProcessedTrial {
  KinematicSeries series;
  ChannelLayout layout;
  std::vector<HeelStrikeEvent> events;  // both feet, time order
  std::vector<GaitCycle> cycles;        // every segmented cycle, valid flag set, start order
  std::vector<Rejection> rejections;
};

/// Belt adjustment, filtering, velocities, events, segmentation and rejection.
ProcessedTrial preprocess_trial(const Trial& trial, const PreprocessConfig& config = {});

/// Centroid of the named markers' series.
Trajectory centroid(const std::map<std::string, Trajectory>& markers, std::span<const std::string> names);

}  // namespace gaitscale
