#include "gaitscale/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "gaitscale/error.hpp"

namespace gaitscale {

std::string_view to_string(Foot f) { return f == Foot::Left ? "left" : "right"; }

std::vector<Biquad> butterworth_lowpass_sections(double fs, double fc, int order) {
  if (order < 1) fail(ErrorKind::InvalidConfig, "filter order must be >= 1");
  if (!(fs > 0.0) || !(fc > 0.0) || !(fc < fs / 2.0)) {
    fail(ErrorKind::InvalidCutoff, "cutoff " + std::to_string(fc) + " Hz must lie in (0, fs/2) for fs " +
                                       std::to_string(fs));
  }
  const double k = 2.0 * fs;
  const double wa = k * std::tan(std::numbers::pi * fc / fs);
  std::vector<Biquad> sos;
  for (int i = 0; i < order / 2; ++i) {
    // Analog prototype pole pair at angle theta in the left half plane.
    const double theta = std::numbers::pi * (2.0 * i + order + 1.0) / (2.0 * order);
    const double a1 = -2.0 * std::cos(theta) * wa;
    const double a0 = wa * wa;
    const double d0 = k * k + a1 * k + a0;
    const double g = a0 / d0;
    sos.push_back({g, 2.0 * g, g, (2.0 * a0 - 2.0 * k * k) / d0, (k * k - a1 * k + a0) / d0});
  }
  if (order % 2 == 1) {
    const double d0 = k + wa;
    sos.push_back({wa / d0, wa / d0, 0.0, (wa - k) / d0, 0.0});
  }
  return sos;
}

namespace {

/// Steady-state transposed direct-form II states for a unit step, per section.
std::vector<std::array<double, 2>> sos_step_states(const std::vector<Biquad>& sos) {
  std::vector<std::array<double, 2>> zi;
  double level = 1.0;
  for (const Biquad& s : sos) {
    const double y = level * (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double z2 = s.b2 * level - s.a2 * y;
    const double z1 = s.b1 * level - s.a1 * y + z2;
    zi.push_back({z1, z2});
    level = y;
  }
  return zi;
}

void sos_filter(const std::vector<Biquad>& sos, const std::vector<std::array<double, 2>>& zi, double scale,
                std::vector<double>& x) {
  for (size_t k = 0; k < sos.size(); ++k) {
    const Biquad& s = sos[k];
    double z1 = zi[k][0] * scale;
    double z2 = zi[k][1] * scale;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

}  // namespace

std::vector<double> butterworth_lowpass_zerolag(std::span<const double> signal, double fs, double fc, int order) {
  const auto sos = butterworth_lowpass_sections(fs, fc, order);
  const size_t n = signal.size();
  if (n < static_cast<size_t>(3 * order) || n < 2) {
    fail(ErrorKind::TooShort, "filter needs at least " + std::to_string(3 * order) + " samples, got " +
                                  std::to_string(n));
  }
  const size_t pad = std::min(static_cast<size_t>(3 * order), n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (size_t i = pad; i >= 1; --i) ext.push_back(2.0 * signal[0] - signal[i]);
  ext.insert(ext.end(), signal.begin(), signal.end());
  for (size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * signal[n - 1] - signal[n - 1 - i]);

  const auto zi = sos_step_states(sos);
  sos_filter(sos, zi, ext.front(), ext);
  std::reverse(ext.begin(), ext.end());
  sos_filter(sos, zi, ext.front(), ext);
  std::reverse(ext.begin(), ext.end());
  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

std::vector<double> finite_difference_velocity(std::span<const double> f, double dt) {
  const size_t n = f.size();
  if (n < 5) fail(ErrorKind::TooShort, "velocity needs at least 5 samples");
  if (!(dt > 0.0)) fail(ErrorKind::InvalidConfig, "dt must be positive");
  std::vector<double> v(n);
  for (size_t i = 2; i + 2 < n; ++i) {
    v[i] = (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / (12.0 * dt);
  }
  for (size_t i = 0; i < 2; ++i) {
    v[i] = (-3.0 * f[i] + 4.0 * f[i + 1] - f[i + 2]) / (2.0 * dt);
    const size_t j = n - 1 - i;
    v[j] = (3.0 * f[j] - 4.0 * f[j - 1] + f[j - 2]) / (2.0 * dt);
  }
  return v;
}

std::vector<double> belt_speed_adjust(std::span<const double> y, double v, std::span<const double> t) {
  if (y.size() != t.size()) fail(ErrorKind::LengthMismatch, "position and time lengths differ");
  std::vector<double> out(y.size());
  for (size_t i = 0; i < y.size(); ++i) out[i] = y[i] + v * t[i];
  return out;
}

namespace {

std::vector<int> local_maxima(std::span<const double> x) {
  std::vector<int> peaks;
  const int n = static_cast<int>(x.size());
  int i = 1;
  while (i < n - 1) {
    if (x[i - 1] < x[i]) {
      int ahead = i + 1;
      while (ahead < n - 1 && x[ahead] == x[i]) ++ahead;
      if (x[ahead] < x[i]) {
        peaks.push_back((i + ahead - 1) / 2);
        i = ahead;
        continue;
      }
    }
    ++i;
  }
  return peaks;
}

double prominence(std::span<const double> x, int peak) {
  const int n = static_cast<int>(x.size());
  double left_min = x[peak];
  for (int j = peak - 1; j >= 0 && x[j] <= x[peak]; --j) left_min = std::min(left_min, x[j]);
  double right_min = x[peak];
  for (int j = peak + 1; j < n && x[j] <= x[peak]; ++j) right_min = std::min(right_min, x[j]);
  return x[peak] - std::max(left_min, right_min);
}

}  // namespace

std::vector<HeelStrikeEvent> detect_heel_strikes(std::span<const double> foot_y, std::span<const double> pelvis_y,
                                                 double fs, Foot foot, const HeelStrikeConfig& config) {
  if (foot_y.size() != pelvis_y.size()) fail(ErrorKind::LengthMismatch, "foot and pelvis lengths differ");
  if (!(fs > 0.0)) fail(ErrorKind::InvalidConfig, "fs must be positive");
  if (static_cast<double>(foot_y.size()) < config.min_duration_s * fs) {
    fail(ErrorKind::TooShort, "heel-strike detection needs at least " + std::to_string(config.min_duration_s) + " s");
  }
  std::vector<double> d(foot_y.size());
  for (size_t i = 0; i < d.size(); ++i) d[i] = foot_y[i] - pelvis_y[i];
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double range = *hi - *lo;

  std::vector<int> peaks = local_maxima(d);
  // Refractory period: keep the higher peak of any pair closer than the gap.
  const int gap = static_cast<int>(std::ceil(config.min_separation_s * fs - 1e-9));
  std::vector<int> by_height(peaks.size());
  for (size_t i = 0; i < peaks.size(); ++i) by_height[i] = static_cast<int>(i);
  std::stable_sort(by_height.begin(), by_height.end(), [&](int a, int b) { return d[peaks[a]] > d[peaks[b]]; });
  std::vector<bool> keep(peaks.size(), true);
  for (int idx : by_height) {
    if (!keep[idx]) continue;
    for (int j = idx - 1; j >= 0 && peaks[idx] - peaks[j] < gap; --j) keep[j] = false;
    for (size_t j = idx + 1; j < peaks.size() && peaks[j] - peaks[idx] < gap; ++j) keep[j] = false;
  }
  std::vector<HeelStrikeEvent> events;
  for (size_t i = 0; i < peaks.size(); ++i) {
    if (!keep[i] || range <= 0.0) continue;
    if (prominence(d, peaks[i]) < config.prominence_fraction * range) continue;
    events.push_back({foot, peaks[i], peaks[i] / fs});
  }
  if (events.size() < 2) {
    fail(ErrorKind::NoGaitDetected, "found " + std::to_string(events.size()) + " heel strikes for the " +
                                        std::string(to_string(foot)) + " foot");
  }
  return events;
}

int ChannelLayout::marker_index(const std::string& name) const {
  const auto it = std::lower_bound(markers.begin(), markers.end(), name);
  if (it == markers.end() || *it != name) fail(ErrorKind::UnknownMarker, "marker '" + name + "'");
  return static_cast<int>(it - markers.begin());
}

int ChannelLayout::column(const std::string& marker, int axis, bool velocity) const {
  return marker_index(marker) * 6 + axis * 2 + (velocity ? 1 : 0);
}

int ChannelLayout::gaze_column(int axis) const {
  if (!has_gaze) fail(ErrorKind::UnknownMarker, "trial has no gaze track");
  return static_cast<int>(markers.size()) * 6 + axis;
}

namespace {

Eigen::RowVectorXd channels_at(const KinematicSeries& s, const ChannelLayout& layout, double pos) {
  const int last = static_cast<int>(s.time.size()) - 1;
  const int i0 = std::clamp(static_cast<int>(std::floor(pos)), 0, last);
  const int i1 = std::min(i0 + 1, last);
  const double w = pos - i0;
  Eigen::RowVectorXd row(layout.channels());
  int c = 0;
  for (const std::string& m : layout.markers) {
    const Trajectory& p = s.position.at(m);
    const Trajectory& v = s.velocity.at(m);
    for (int a = 0; a < 3; ++a) {
      row[c++] = p.axis(a)[i0] + w * (p.axis(a)[i1] - p.axis(a)[i0]);
      row[c++] = v.axis(a)[i0] + w * (v.axis(a)[i1] - v.axis(a)[i0]);
    }
  }
  if (layout.has_gaze) {
    row[c++] = s.gaze->x[i0];
    row[c++] = s.gaze->y[i0];
  }
  return row;
}

}  // namespace

std::vector<GaitCycle> segment_cycles(const KinematicSeries& series, const ChannelLayout& layout,
                                      std::span<const HeelStrikeEvent> events) {
  std::vector<GaitCycle> cycles;
  for (Foot foot : {Foot::Left, Foot::Right}) {
    std::vector<HeelStrikeEvent> mine;
    for (const auto& e : events) {
      if (e.foot == foot) mine.push_back(e);
    }
    std::sort(mine.begin(), mine.end(), [](const auto& a, const auto& b) { return a.frame < b.frame; });
    for (size_t i = 0; i + 1 < mine.size(); ++i) {
      GaitCycle c;
      c.foot = foot;
      c.start = mine[i];
      c.end = mine[i + 1];
      c.phases.resize(kPhasesPerCycle, layout.channels());
      const double span = c.end.frame - c.start.frame;
      for (int k = 0; k < kPhasesPerCycle; ++k) {
        c.phases.row(k) = channels_at(series, layout, c.start.frame + k * span / kPhasesPerCycle);
      }
      c.terminal = channels_at(series, layout, c.end.frame);
      cycles.push_back(std::move(c));
    }
  }
  std::stable_sort(cycles.begin(), cycles.end(), [](const GaitCycle& a, const GaitCycle& b) {
    return a.start.frame != b.start.frame ? a.start.frame < b.start.frame : a.foot < b.foot;
  });
  return cycles;
}

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  return m;
}

std::vector<Rejection> mark_anomalous(std::vector<GaitCycle>& cycles, const KinematicSeries& series,
                                      const std::array<std::string, 2>& foot_markers,
                                      const RejectionConfig& config) {
  std::vector<Rejection> log;
  if (cycles.empty()) return log;
  std::vector<double> durations;
  for (const auto& c : cycles) durations.push_back(c.duration());
  const double med = median_of(durations);
  std::vector<bool> bad(cycles.size(), false);
  for (size_t i = 0; i < cycles.size(); ++i) {
    const double d = cycles[i].duration();
    if (d < config.duration_low * med || d > config.duration_high * med) {
      bad[i] = true;
      log.push_back({static_cast<int>(i), cycles[i].foot, "duration"});
    }
  }
  if (series.task != Task::TreadmillRun) {
    for (Foot foot : {Foot::Left, Foot::Right}) {
      const auto it = series.position.find(foot_markers[static_cast<int>(foot)]);
      if (it == series.position.end()) {
        fail(ErrorKind::UnknownMarker, "foot marker '" + foot_markers[static_cast<int>(foot)] + "'");
      }
      const std::vector<double>& z = it->second.z;
      auto stance = [&](const GaitCycle& c) {
        return std::pair<int, int>{c.start.frame, c.start.frame + (c.end.frame - c.start.frame) / 2};
      };
      std::vector<double> pool;
      for (size_t i = 0; i < cycles.size(); ++i) {
        if (cycles[i].foot != foot || bad[i]) continue;
        const auto [a, b] = stance(cycles[i]);
        for (int f = a; f <= b; ++f) pool.push_back(z[f]);
      }
      const double baseline = median_of(pool);
      for (size_t i = 0; i < cycles.size(); ++i) {
        if (cycles[i].foot != foot || bad[i]) continue;
        const auto [a, b] = stance(cycles[i]);
        const double peak = *std::max_element(z.begin() + a, z.begin() + b + 1);
        if (peak - baseline > config.stance_lift_m) {
          bad[i] = true;
          log.push_back({static_cast<int>(i), foot, "stance_lift"});
        }
      }
    }
  }
  for (size_t i = 0; i < cycles.size(); ++i) cycles[i].valid = !bad[i];
  std::sort(log.begin(), log.end(), [](const Rejection& a, const Rejection& b) { return a.cycle_index < b.cycle_index; });
  return log;
}

}  // namespace

RejectionOutcome reject_anomalous_cycles(std::vector<GaitCycle> cycles, const KinematicSeries& series,
                                         const std::array<std::string, 2>& foot_markers,
                                         const RejectionConfig& config) {
  RejectionOutcome out;
  out.log = mark_anomalous(cycles, series, foot_markers, config);
  for (auto& c : cycles) {
    if (c.valid) out.kept.push_back(std::move(c));
  }
  if (out.kept.empty()) fail(ErrorKind::AllCyclesRejected, "trial " + std::to_string(series.id));
  return out;
}

std::string rejection_log_csv(std::span<const Rejection> log) {
  std::ostringstream os;
  os << "cycle_index,foot,reason\n";
  for (const auto& r : log) os << r.cycle_index << ',' << to_string(r.foot) << ',' << r.reason << '\n';
  return os.str();
}

Trajectory centroid(const std::map<std::string, Trajectory>& markers, std::span<const std::string> names) {
  if (names.empty()) fail(ErrorKind::UnknownMarker, "centroid of no markers");
  Trajectory out;
  for (const std::string& name : names) {
    const auto it = markers.find(name);
    if (it == markers.end()) fail(ErrorKind::UnknownMarker, "marker '" + name + "'");
    for (int a = 0; a < 3; ++a) {
      std::vector<double>& dst = out.axis(a);
      const std::vector<double>& src = it->second.axis(a);
      if (dst.empty()) dst.assign(src.size(), 0.0);
      for (size_t i = 0; i < src.size(); ++i) dst[i] += src[i] / static_cast<double>(names.size());
    }
  }
  return out;
}

ProcessedTrial preprocess_trial(const Trial& trial, const PreprocessConfig& config) {
  trial.validate();
  for (const auto& name : config.foot_markers) {
    if (!trial.markers.count(name)) fail(ErrorKind::UnknownMarker, "trial " + std::to_string(trial.id) + " lacks '" + name + "'");
  }
  ProcessedTrial out;
  KinematicSeries& s = out.series;
  s.id = trial.id;
  s.fs = trial.fs;
  s.task = trial.task;
  s.time = trial.time;
  s.gaze = trial.gaze;
  const double dt = 1.0 / trial.fs;
  for (const auto& [name, raw] : trial.markers) {
    Trajectory adjusted = raw;
    adjusted.y = belt_speed_adjust(raw.y, trial.belt_speed, trial.time);
    s.raw_position[name] = adjusted;
    Trajectory& pos = s.position[name];
    Trajectory& vel = s.velocity[name];
    for (int a = 0; a < 3; ++a) {
      pos.axis(a) = butterworth_lowpass_zerolag(s.raw_position[name].axis(a), trial.fs, config.cutoff_hz, config.filter_order);
      vel.axis(a) = finite_difference_velocity(pos.axis(a), dt);
    }
  }
  const Trajectory pelvis = centroid(s.position, config.pelvis_markers);
  for (Foot foot : {Foot::Left, Foot::Right}) {
    const auto ev = detect_heel_strikes(s.position.at(config.foot_markers[static_cast<int>(foot)]).y, pelvis.y,
                                        trial.fs, foot, config.heel_strike);
    out.events.insert(out.events.end(), ev.begin(), ev.end());
  }
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const auto& a, const auto& b) { return a.frame < b.frame; });
  for (const auto& [name, tr] : trial.markers) out.layout.markers.push_back(name);
  out.layout.has_gaze = trial.gaze.has_value();
  out.cycles = segment_cycles(s, out.layout, out.events);
  out.rejections = mark_anomalous(out.cycles, s, config.foot_markers, config.rejection);
  if (std::none_of(out.cycles.begin(), out.cycles.end(), [](const GaitCycle& c) { return c.valid; })) {
    fail(ErrorKind::AllCyclesRejected, "trial " + std::to_string(trial.id));
  }
  return out;
}

}  // namespace gaitscale
