#include "gaitscale/synthgait.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "gaitscale/error.hpp"
#include "gaitscale/format.hpp"
#include "gaitscale/rng.hpp"

namespace gaitscale::synth {

void SynthConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::InvalidConfig, "synth: " + what); };
  if (n_trials < 1) bad("n_trials must be >= 1");
  if (strides_per_trial < 4) bad("strides_per_trial must be >= 4");
  if (!(cadence_hz > 0.0) || !(fs > 0.0)) bad("cadence and fs must be positive");
  if (!(sigma_eps >= 0.0) || !(sigma_v >= 0.0) || !(marker_noise >= 0.0)) bad("noise scales must be >= 0");
  const double grid = phi_star * 20.0;
  if (phi_star < 0.0 || phi_star > 1.0 || std::abs(grid - std::round(grid)) > 1e-9) {
    bad("phi_star must lie on the 21-point grid");
  }
  if (!(swing_fraction > 0.0 && swing_fraction < 0.5)) bad("swing_fraction must be in (0, 0.5)");
  if (!(ramp_half_width > 0.0 && ramp_half_width <= 0.25)) bad("ramp_half_width must be in (0, 0.25]");
  if (step_jitter_frames < 0) bad("step_jitter_frames must be >= 0");
  const double step = fs / cadence_hz / 2.0;
  if (step - step_jitter_frames < 0.45 * fs) bad("steps shorter than the 0.4 s refractory period");
}

namespace {

double smoothstep(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * (3.0 - 2.0 * s);
}

double hermite(double s, double p0, double m0, double p1, double m1) {
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * m1;
}

// Half-width of the window around each contact in which the foot approaches
// at constant speed and the pelvis moves at constant speed.
constexpr double kApproach = 0.12;
constexpr double kApproachSpeed = 2.0;  // multiples of walking speed
// Lateral sway toward the stance foot and a matching vertical tilt, a half
// sine per step. The vertical part keeps the stance side visible in a signal
// that does not drift.
constexpr double kSway = 0.02;
constexpr double kTilt = 0.005;

struct Walker {
  const SynthConfig& cfg;
  int first;  // index offset: strike j lives at slot j + first
  std::vector<double> t;   // strike times, s
  std::vector<std::array<double, 2>> contact;
  std::vector<double> c;
  double step_time;
  double speed;

  int slots() const { return static_cast<int>(t.size()); }
  Foot foot_of(int slot) const { return ((slot - first) % 2 + 2) % 2 == 0 ? Foot::Left : Foot::Right; }

  std::array<double, 3> foot_position(Foot foot, double time) const {
    int next = -1;
    for (int k = 0; k < slots(); ++k) {
      if (foot_of(k) == foot && t[k] > time) {
        next = k;
        break;
      }
    }
    int prev = -1;
    if (next < 0) {
      for (int k = slots() - 1; k >= 0; --k) {
        if (foot_of(k) == foot) {
          prev = k;
          break;
        }
      }
      return {contact[prev][0], contact[prev][1], 0.05};
    }
    prev = next - 2;
    if (prev < 0) return {contact[next][0], contact[next][1], 0.05};
    const double stride = t[next] - t[prev];
    const double lift = t[next] - cfg.swing_fraction * stride;
    if (time < lift) return {contact[prev][0], contact[prev][1], 0.05};
    const double s = (time - lift) / (t[next] - lift);
    const double sn = std::sin(std::numbers::pi * s);
    const double u = kApproachSpeed * speed;
    const double glide = t[next] - kApproach;
    double y = contact[next][1] - u * (t[next] - time);
    if (time < glide) {
      const double len = glide - lift;
      y = hermite((time - lift) / len, contact[prev][1], 0.0, contact[next][1] - u * kApproach, u * len);
    }
    return {contact[prev][0] + (contact[next][0] - contact[prev][0]) * smoothstep(s), y,
            0.05 + cfg.swing_height * sn * sn};
  }

  std::array<double, 3> pelvis(double time) const {
    // Fore-aft: nominal progression plus a catch-up to each new double-support
    // midpoint, ramped between the approach windows of consecutive strikes.
    auto expected = [&](double tt) { return 0.5 * (contact[0][1] + contact[1][1]) + speed * (tt - t[1]); };
    auto lateral_target = [&](int k) {
      const double mid = 0.5 * (contact[k][0] + contact[k - 1][0]);
      return mid + 0.3 * (contact[k][0] - mid);
    };
    double y = expected(time);
    double x = lateral_target(1);
    double prev_dev = 0.0;
    double level = 0.0;
    double bob = 0.0;
    double sway = 0.0;
    for (int k = 2; k < slots(); ++k) {
      const double dev = 0.5 * (contact[k][1] + contact[k - 1][1]) - expected(t[k]);
      const double until = k + 1 < slots() ? t[k + 1] : t[k] + step_time;
      const double ramp = smoothstep((time - t[k]) / step_time);
      y += (dev - prev_dev) * smoothstep((time - t[k] - kApproach) / (until - t[k] - 2.0 * kApproach));
      prev_dev = dev;
      x += (lateral_target(k) - lateral_target(k - 1)) * ramp;

      const double stride = t[k] - t[k - 2];
      const double start = t[k - 2] + cfg.phi_star * stride;
      const double r = std::clamp((time - start) / (2.0 * cfg.ramp_half_width * stride), 0.0, 1.0);
      level += (c[k] - c[k - 1]) * r;

      if (time >= t[k - 1] && time < t[k]) {
        const double u = (time - t[k - 1]) / (t[k] - t[k - 1]);
        bob = std::cos(2.0 * std::numbers::pi * u);
        sway = (foot_of(k - 1) == Foot::Right ? 1.0 : -1.0) * std::sin(std::numbers::pi * u);
      }
    }
    return {x + kSway * sway, y, 0.95 + 0.015 * bob + kTilt * sway + cfg.com_amplitude * level};
  }

  std::array<double, 2> gaze(double time) const {
    int k = 0;
    while (k + 1 < slots() && t[k + 1] <= time) ++k;
    const int target = std::min(k + 2, slots() - 1);
    return contact[target];
  }
};

}  // namespace

SynthOutput generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthOutput out;
  out.dataset.context = "synthetic";
  const int step_frames = static_cast<int>(std::lround(cfg.fs / cfg.cadence_hz / 2.0));
  const int strikes = 2 * cfg.strides_per_trial;
  for (int v = 0; v < cfg.n_trials; ++v) {
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(v)}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> jitter(-cfg.step_jitter_frames, cfg.step_jitter_frames);
    TrialTruth truth;
    truth.trial_id = v;
    const double o_ml = cfg.sigma_v * normal(rng);
    const double o_ap = cfg.sigma_v * normal(rng);
    truth.trial_offset = {o_ml, cfg.step_length + o_ap};

    // Two scripted contacts precede strike 0 (left, right).
    Walker w{cfg, 2, {}, {}, {}, step_frames / cfg.fs, 0.0};
    w.speed = (cfg.step_length + o_ap) / w.step_time;
    std::vector<int> frames{30, 30 + step_frames};
    w.contact = {{-cfg.step_width / 2.0, 0.0}, {cfg.step_width / 2.0, cfg.step_length}};
    w.c = {0.0, 0.0};
    for (int j = 0; j < strikes; ++j) {
      StrikeTruth st;
      st.index = j;
      st.foot = j % 2 == 0 ? Foot::Left : Foot::Right;
      st.frame = frames.back() + step_frames + jitter(rng);
      st.time = st.frame / cfg.fs;
      st.com_state = normal(rng);
      st.noise = {cfg.sigma_eps * normal(rng), cfg.sigma_eps * normal(rng)};
      const double side = st.foot == Foot::Right ? 1.0 : -1.0;
      st.offset = {side * cfg.step_width + truth.trial_offset[0], truth.trial_offset[1]};
      for (int a = 0; a < 2; ++a) st.target[a] = st.offset[a] + cfg.gain[a] * st.com_state + st.noise[a];
      const auto& prev = w.contact.back();
      st.contact = {prev[0] + st.target[0], prev[1] + st.target[1]};
      frames.push_back(st.frame);
      w.contact.push_back(st.contact);
      w.c.push_back(st.com_state);
      truth.strikes.push_back(st);
    }
    for (int f : frames) w.t.push_back(f / cfg.fs);

    Trial trial;
    trial.id = v;
    trial.fs = cfg.fs;
    trial.task = cfg.treadmill ? Task::TreadmillWalk : Task::OvergroundWalk;
    trial.terrain = Terrain::None;
    trial.belt_speed = cfg.treadmill ? w.speed : 0.0;
    const int n = frames.back() + 40;
    std::map<std::string, Trajectory> markers;
    for (const char* name : {"pelvis", "foot_l", "foot_r"}) markers[name];
    if (cfg.with_knees) {
      markers["knee_l"];
      markers["knee_r"];
    }
    GazeTrack gaze;
    for (int i = 0; i < n; ++i) {
      const double time = i / cfg.fs;
      trial.time.push_back(time);
      const auto p = w.pelvis(time);
      const auto fl = w.foot_position(Foot::Left, time);
      const auto fr = w.foot_position(Foot::Right, time);
      auto push = [&](const std::string& name, const std::array<double, 3>& pos) {
        Trajectory& tr = markers[name];
        for (int a = 0; a < 3; ++a) tr.axis(a).push_back(pos[a]);
      };
      push("pelvis", p);
      push("foot_l", fl);
      push("foot_r", fr);
      if (cfg.with_knees) {
        push("knee_l", {0.5 * (p[0] + fl[0]), 0.5 * (p[1] + fl[1]) + 0.05, 0.5 * (p[2] + fl[2])});
        push("knee_r", {0.5 * (p[0] + fr[0]), 0.5 * (p[1] + fr[1]) + 0.05, 0.5 * (p[2] + fr[2])});
      }
      if (cfg.with_gaze) {
        const auto g = w.gaze(time);
        gaze.x.push_back(g[0]);
        gaze.y.push_back(g[1]);
      }
    }
    Rng noise_rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(v), 0x6e6f697365ULL}));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (auto& [name, tr] : markers) {
      for (int a = 0; a < 3; ++a) {
        std::vector<double>& axis = tr.axis(a);
        for (int i = 0; i < n; ++i) {
          if (a == 1) axis[i] -= trial.belt_speed * trial.time[i];
          if (cfg.marker_noise > 0.0) axis[i] += cfg.marker_noise * noise(noise_rng);
        }
      }
    }
    trial.markers = std::move(markers);
    if (cfg.with_gaze) trial.gaze = std::move(gaze);
    out.dataset.trials.push_back(std::move(trial));
    out.truth.push_back(std::move(truth));
  }
  return out;
}

double ceiling_r2(double sigma_eps, std::span<const double> targets) {
  if (targets.size() < 2) fail(ErrorKind::TooFewPoints, "ceiling needs at least two targets");
  double mean = 0.0;
  for (double y : targets) mean += y;
  mean /= static_cast<double>(targets.size());
  double var = 0.0;
  for (double y : targets) var += (y - mean) * (y - mean);
  var /= static_cast<double>(targets.size());
  if (var <= 0.0) return sigma_eps == 0.0 ? 1.0 : 0.0;
  return std::clamp(1.0 - sigma_eps * sigma_eps / var, 0.0, 1.0);
}

CeilingReport analytic_ceiling(const SynthConfig& config, const SynthOutput& output) {
  CeilingReport rep;
  for (int a = 0; a < 2; ++a) {
    std::vector<double> ys;
    std::map<std::pair<int, int>, std::pair<double, int>> groups;
    for (const auto& tr : output.truth) {
      for (const auto& s : tr.strikes) {
        ys.push_back(s.target[a]);
        auto& g = groups[{tr.trial_id, static_cast<int>(s.foot)}];
        g.first += s.target[a];
        g.second += 1;
      }
    }
    double mean = 0.0;
    for (double y : ys) mean += y / static_cast<double>(ys.size());
    double sst = 0.0, sse = 0.0;
    size_t i = 0;
    for (const auto& tr : output.truth) {
      for (const auto& s : tr.strikes) {
        const auto& g = groups[{tr.trial_id, static_cast<int>(s.foot)}];
        sst += (ys[i] - mean) * (ys[i] - mean);
        sse += (ys[i] - g.first / g.second) * (ys[i] - g.first / g.second);
        ++i;
      }
    }
    rep.target_variance[a] = sst / static_cast<double>(ys.size());
    rep.r2_max[a] = ceiling_r2(config.sigma_eps, ys);
    rep.offset_only[a] = sst > 0.0 ? 1.0 - sse / sst : 0.0;
  }
  for (const auto& tr : output.truth) {
    std::array<double, 2> var{};
    for (int a = 0; a < 2; ++a) {
      double m = 0.0;
      for (const auto& s : tr.strikes) m += s.target[a] / static_cast<double>(tr.strikes.size());
      for (const auto& s : tr.strikes) var[a] += (s.target[a] - m) * (s.target[a] - m) / static_cast<double>(tr.strikes.size());
    }
    rep.per_trial_variance.push_back(var);
  }
  return rep;
}

CeilingReport analytic_ceiling(const SynthConfig& config) { return analytic_ceiling(config, generate(config)); }

PreprocessConfig preprocess_config() {
  PreprocessConfig p;
  p.foot_markers = {"foot_l", "foot_r"};
  p.pelvis_markers = {"pelvis"};
  return p;
}

std::string truth_csv(const TrialTruth& truth) {
  std::ostringstream os;
  os << "strike,foot,frame,time,target_ml,target_ap,com_state,noise_ml,noise_ap,offset_ml,offset_ap,"
        "contact_x,contact_y,trial_offset_ml,trial_offset_ap\n";
  for (const auto& s : truth.strikes) {
    os << s.index << ',' << to_string(s.foot) << ',' << s.frame << ',' << format_double(s.time);
    for (double v : {s.target[0], s.target[1], s.com_state, s.noise[0], s.noise[1], s.offset[0], s.offset[1],
                     s.contact[0], s.contact[1], truth.trial_offset[0], truth.trial_offset[1]}) {
      os << ',' << format_double(v);
    }
    os << '\n';
  }
  return os.str();
}

void write_sidecars(const SynthOutput& output, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& tr : output.truth) {
    const auto path = dir / ("trial_" + std::to_string(tr.trial_id) + "_truth.csv");
    std::ofstream f(path);
    if (!f) fail(ErrorKind::IoFailure, "cannot write " + path.string());
    f << truth_csv(tr);
  }
}

}  // namespace gaitscale::synth
