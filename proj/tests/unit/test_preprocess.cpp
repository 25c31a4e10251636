#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "gaitscale/error.hpp"
#include "gaitscale/preprocess.hpp"

using namespace gaitscale;
using std::numbers::pi;

namespace {

std::vector<double> sine(int n, double fs, double f, double phase = 0.0) {
  std::vector<double> s(n);
  for (int i = 0; i < n; ++i) s[i] = std::sin(2 * pi * f * i / fs + phase);
  return s;
}

double amplitude(const std::vector<double>& s, int from, int to) {
  double m = 0;
  for (int i = from; i < to; ++i) m = std::max(m, std::abs(s[i]));
  return m;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("butterworth passes DC") {
  const std::vector<double> c(200, 3.25);
  for (double fs : {100.0, 250.0}) {
    for (double fc : {2.0, 6.0, 20.0}) {
      const auto y = butterworth_lowpass_zerolag(c, fs, fc);
      for (double v : y) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));
    }
  }
}

TEST_CASE("butterworth gain at cutoff is one half") {
  const double fs = 100, fc = 6;
  const auto x = sine(4000, fs, fc);
  const auto y = butterworth_lowpass_zerolag(x, fs, fc);
  CHECK(std::abs(amplitude(y, 500, 3500) - 0.5) < 0.01);
}

TEST_CASE("butterworth attenuates five times cutoff") {
  const double fs = 200, fc = 6;
  const auto x = sine(4000, fs, 5 * fc);
  const auto y = butterworth_lowpass_zerolag(x, fs, fc);
  CHECK(amplitude(y, 500, 3500) < 1e-4);
}

TEST_CASE("butterworth is zero phase") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  std::vector<double> x(3000, 0.0);
  for (int k = 1; k <= 8; ++k) {
    const double a = nd(rng), ph = nd(rng);
    for (int i = 0; i < 3000; ++i) x[i] += a * std::sin(2 * pi * 0.5 * k * i / 100.0 + ph);
  }
  const auto y = butterworth_lowpass_zerolag(x, 100, 6);
  int best_lag = 99;
  double best = -1e300;
  for (int lag = -20; lag <= 20; ++lag) {
    double s = 0;
    for (int i = 200; i < 2800; ++i) s += x[i] * y[i + lag];
    if (s > best) {
      best = s;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("butterworth input validation") {
  const std::vector<double> shortsig(11, 1.0);
  CHECK_THROWS_WITH_AS(butterworth_lowpass_zerolag(shortsig, 100, 6), doctest::Contains("TooShort"), Error);
  const std::vector<double> ok(100, 1.0);
  CHECK_THROWS_WITH_AS(butterworth_lowpass_zerolag(ok, 100, 50), doctest::Contains("InvalidCutoff"), Error);
  CHECK(butterworth_lowpass_zerolag(ok, 100, 6).size() == 100);
}

TEST_CASE("velocity stencil exactness") {
  const double dt = 0.01;
  std::vector<double> ramp, cubic;
  for (int i = 0; i < 50; ++i) {
    const double t = i * dt;
    ramp.push_back(2 * t + 1);
    cubic.push_back(t * t * t);
  }
  const auto vr = finite_difference_velocity(ramp, dt);
  for (double v : vr) CHECK(v == doctest::Approx(2.0).epsilon(1e-10));
  const auto vc = finite_difference_velocity(cubic, dt);
  for (int i = 2; i < 48; ++i) CHECK(std::abs(vc[i] - 3 * (i * dt) * (i * dt)) < 1e-12);
  std::vector<double> s;
  for (int i = 0; i < 700; ++i) s.push_back(std::sin(i * dt));
  const auto vs = finite_difference_velocity(s, dt);
  double worst = 0;
  for (int i = 2; i < 698; ++i) worst = std::max(worst, std::abs(vs[i] - std::cos(i * dt)));
  CHECK(worst < 1e-8);
  CHECK_THROWS_AS(finite_difference_velocity(std::vector<double>(4, 0.0), dt), Error);
}

TEST_CASE("belt speed adjustment") {
  std::vector<double> t, zero, per;
  for (int i = 0; i < 1000; ++i) {
    t.push_back(i * 0.01);
    zero.push_back(0.0);
    per.push_back(0.3 * std::sin(2 * pi * i * 0.01 / 1.1));
  }
  const auto a = belt_speed_adjust(zero, 1.2, t);
  for (size_t i = 0; i < t.size(); ++i) CHECK(a[i] == 1.2 * t[i]);
  const auto id = belt_speed_adjust(per, 0.0, t);
  CHECK(id == per);
  // Periodic treadmill signal without drift, sampled symmetrically about its
  // mid time: the least-squares slope of y' over t must equal the belt speed.
  const double mid = t[t.size() / 2 - 1] / 2 + t[t.size() / 2] / 2;
  std::vector<double> yp;
  for (double ti : t) yp.push_back(0.3 * std::cos(2 * pi * (ti - mid) / 1.1));
  const auto adj = belt_speed_adjust(yp, 1.0, t);
  double mt = 0, my = 0;
  for (size_t i = 0; i < t.size(); ++i) {
    mt += t[i] / t.size();
    my += adj[i] / t.size();
  }
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < t.size(); ++i) {
    sxy += (t[i] - mt) * (adj[i] - my);
    sxx += (t[i] - mt) * (t[i] - mt);
  }
  CHECK(std::abs(sxy / sxx - 1.0) < 1e-9);
  CHECK_THROWS_AS(belt_speed_adjust(zero, 1.0, std::vector<double>(3, 0.0)), Error);
}

TEST_CASE("heel strikes of a sinusoid") {
  const double fs = 100;
  const int n = 1000;
  const auto d = sine(n, fs, 1 / 1.1);
  const std::vector<double> pelvis(n, 0.0);
  const auto ev = detect_heel_strikes(d, pelvis, fs);
  REQUIRE(ev.size() == 9);
  for (size_t k = 0; k < ev.size(); ++k) CHECK(std::abs(ev[k].time - (0.275 + 1.1 * k)) <= 0.5 / fs + 1e-9);
  CHECK_THROWS_WITH_AS(detect_heel_strikes(pelvis, pelvis, fs), doctest::Contains("NoGaitDetected"), Error);
}

TEST_CASE("heel strikes are shift invariant") {
  const double fs = 100;
  const int n = 1200;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0, 0.01);
  std::vector<double> foot(n), pelvis(n);
  for (int i = 0; i < n; ++i) {
    pelvis[i] = 0.1 * nd(rng);
    foot[i] = 0.3 * std::sin(2 * pi * i / fs / 1.1) + nd(rng);
  }
  const auto base = detect_heel_strikes(foot, pelvis, fs);
  std::vector<double> f2 = foot, p2 = pelvis;
  for (int i = 0; i < n; ++i) {
    f2[i] += 5.0;
    p2[i] += 5.0;
  }
  const auto lifted = detect_heel_strikes(f2, p2, fs);
  REQUIRE(lifted.size() == base.size());
  for (size_t k = 0; k < base.size(); ++k) CHECK(lifted[k].frame == base[k].frame);
  // Shift by 37 frames: prepend frames from a continuation of the same signal.
  std::vector<double> fs2(foot.begin() + 37, foot.end()), ps2(pelvis.begin() + 37, pelvis.end());
  const auto shifted = detect_heel_strikes(fs2, ps2, fs);
  int matched = 0;
  for (const auto& e : shifted) {
    for (const auto& b : base) matched += (b.frame - 37 == e.frame);
  }
  CHECK(matched == static_cast<int>(shifted.size()));
}

TEST_CASE("refractory period keeps the higher of two close peaks") {
  const double fs = 100;
  const int n = 600;
  std::vector<double> d(n, 0.0), p(n, 0.0);
  auto bump = [&](int c, double h) {
    for (int i = -10; i <= 10; ++i) d[c + i] = std::max(d[c + i], h * (1 - std::abs(i) / 10.0));
  };
  bump(100, 1.0);
  bump(125, 0.8);
  bump(300, 1.0);
  bump(500, 1.0);
  const auto ev = detect_heel_strikes(d, p, fs);
  REQUIRE(ev.size() == 3);
  CHECK(ev[0].frame == 100);
}

ChannelLayout one_marker() {
  ChannelLayout l;
  l.markers = {"m"};
  return l;
}

KinematicSeries series_from(const std::vector<double>& f, double fs) {
  KinematicSeries s;
  s.fs = fs;
  for (size_t i = 0; i < f.size(); ++i) s.time.push_back(i / fs);
  Trajectory t;
  t.x = f;
  t.y = f;
  t.z = f;
  s.position["m"] = t;
  s.velocity["m"] = t;
  return s;
}

TEST_CASE("segmenting a 20-frame cycle returns the raw rows") {
  std::vector<double> f;
  for (int i = 0; i < 60; ++i) f.push_back(std::sin(0.3 * i) + 0.01 * i * i);
  const auto s = series_from(f, 100);
  const std::vector<HeelStrikeEvent> ev{{Foot::Left, 5, 0.05}, {Foot::Left, 25, 0.25}, {Foot::Left, 45, 0.45}};
  const auto cycles = segment_cycles(s, one_marker(), ev);
  REQUIRE(cycles.size() == 2);
  for (int k = 0; k < 20; ++k) {
    CHECK(cycles[0].phases(k, 0) == f[5 + k]);
    CHECK(cycles[1].phases(k, 2) == f[25 + k]);
  }
  CHECK(cycles[0].terminal[0] == f[25]);
  CHECK(cycles[0].phases.rows() == 20);
}

TEST_CASE("segmenting is exact on linear channels") {
  std::vector<double> f;
  for (int i = 0; i < 80; ++i) f.push_back(0.5 * i - 3);
  const auto cycles = segment_cycles(series_from(f, 100), one_marker(),
                                     std::vector<HeelStrikeEvent>{{Foot::Right, 3, 0}, {Foot::Right, 40, 0}});
  REQUIRE(cycles.size() == 1);
  for (int k = 0; k < 20; ++k) CHECK(cycles[0].phases(k, 0) == doctest::Approx(0.5 * (3 + k * 37.0 / 20) - 3).epsilon(1e-14));
}

TEST_CASE("segmenting a quadratic over 37 frames") {
  const double fs = 100;
  std::vector<double> f;
  for (int i = 0; i < 60; ++i) f.push_back((i / fs) * (i / fs) + 1.0);
  const auto cycles = segment_cycles(series_from(f, fs), one_marker(),
                                     std::vector<HeelStrikeEvent>{{Foot::Left, 10, 0.1}, {Foot::Left, 47, 0.47}});
  REQUIRE(cycles.size() == 1);
  for (int k = 0; k < 20; ++k) {
    const double t = (10 + k * 37.0 / 20) / fs;
    CHECK(std::abs(cycles[0].phases(k, 0) - (t * t + 1.0)) / (t * t + 1.0) < 1e-3);
  }
}

TEST_CASE("cycle count equals events minus one per foot") {
  std::vector<double> f(400, 0.0);
  std::vector<HeelStrikeEvent> ev;
  for (int k = 0; k < 5; ++k) ev.push_back({Foot::Left, 10 + 70 * k, 0});
  for (int k = 0; k < 4; ++k) ev.push_back({Foot::Right, 45 + 70 * k, 0});
  const auto cycles = segment_cycles(series_from(f, 100), one_marker(), ev);
  int left = 0, right = 0;
  for (const auto& c : cycles) (c.foot == Foot::Left ? left : right)++;
  CHECK(left == 4);
  CHECK(right == 3);
  for (size_t i = 1; i < cycles.size(); ++i) CHECK(cycles[i - 1].start.frame <= cycles[i].start.frame);
}

TEST_CASE("rejection log format") {
  const std::vector<Rejection> log{{3, Foot::Right, "duration"}};
  CHECK(rejection_log_csv(log) == "cycle_index,foot,reason\n3,right,duration\n");
}

}
