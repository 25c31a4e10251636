#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "gaitscale/artifact_io.hpp"
#include "gaitscale/rng.hpp"
#include "gaitscale/trial.hpp"
#include "support/expect_error.hpp"

using namespace gaitscale;
using gaitscale::testing::thrown_kind;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "gaitscale_dataio_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string one_marker_file(int rows, double dt) {
  std::string s = "time,pelvis_x,pelvis_y,pelvis_z\n";
  for (int i = 0; i < rows; ++i) {
    s += std::to_string(i * dt) + "," + std::to_string(0.01 * i) + ",1.5," + std::to_string(0.9 + 0.001 * i) + "\n";
  }
  return s;
}

std::vector<Sample> random_samples(int n, int steps, int m, int trials, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Sample> out(n);
  for (int i = 0; i < n; ++i) {
    auto& s = out[i];
    s.S = Eigen::MatrixXd::NullaryExpr(steps, m, [&] { return g(rng); });
    s.trial = i % trials;
    s.flag = (i / trials) % 2;
    s.y.ml = 0.1 * s.S(steps - 1, 0) + 0.01 * g(rng);
    s.y.ap = 0.6 - 0.1 * s.S(steps - 1, 1) + 0.01 * g(rng);
  }
  return out;
}

cv::EvalCurve sample_curve() {
  cv::EvalCurve c;
  for (int i = 0; i <= 20; ++i) c.phases.push_back(i / 20.0);
  for (int a = 0; a < 2; ++a) {
    for (size_t i = 0; i < c.phases.size(); ++i) {
      const double x = c.phases[i];
      c.r2[a].push_back(std::exp(x) / 3.0 - 0.1 * a);
      c.rmse[a].push_back(1.0 / (1.0 + x * 7.0));
      c.fold_r2[a].push_back({x / 3.0, x / 7.0, x / 11.0, 0.1, -0.2});
      c.smoothed[a].push_back(std::sqrt(x + 0.1));
    }
  }
  for (double x : c.phases) c.rmse_pooled.push_back(std::sin(x));
  return c;
}

}  // namespace

TEST_SUITE("dataio") {

TEST_CASE("load_trial parses one marker at 100 Hz") {
  const auto p = scratch("one.csv");
  write_file(p, one_marker_file(100, 0.01));
  const auto t = load_trial(p, {.id = 0, .belt_speed = 1.2});
  CHECK(t.fs == doctest::Approx(100.0));
  CHECK(t.frames() == 100);
  REQUIRE(t.markers.size() == 1);
  CHECK(t.markers.at("pelvis").size() == 100);
  CHECK(t.markers.at("pelvis").z[10] == doctest::Approx(0.91));
  CHECK(!t.gaze.has_value());
  CHECK(t.belt_speed == 1.2);
}

TEST_CASE("load_trial errors") {
  const auto p = scratch("bad.csv");
  write_file(p, "time,foot_l_x,foot_l_y\n0,0,0\n0.01,0,0\n");
  CHECK(thrown_kind([&] { load_trial(p, {}); }) == ErrorKind::MissingColumn);
  write_file(p, "time,foot_l_x,foot_l_y,foot_l_z\n0,0,0,0\n0.01,0,0,0\n0.05,0,0,0\n0.06,0,0,0\n0.07,0,0,0\n");
  CHECK(thrown_kind([&] { load_trial(p, {}); }) == ErrorKind::NonUniformSampling);
  write_file(p, "");
  CHECK(thrown_kind([&] { load_trial(p, {}); }) == ErrorKind::EmptyFile);
  CHECK(thrown_kind([&] { load_trial(scratch("absent.csv"), {}); }) == ErrorKind::IoFailure);
}

TEST_CASE("parsing is total and loading does not modify the file") {
  Rng rng(4);
  std::uniform_int_distribution<int> rows_d(2, 40), markers_d(1, 6);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const int rows = rows_d(rng), markers = markers_d(rng);
    std::string text = "time";
    for (int m = 0; m < markers; ++m)
      for (char a : {'x', 'y', 'z'}) text += ",m" + std::to_string(m) + "_" + a;
    text += "\n";
    for (int r = 0; r < rows; ++r) {
      text += std::to_string(r * 0.004);
      for (int c = 0; c < 3 * markers; ++c) text += "," + std::to_string(g(rng));
      text += "\n";
    }
    const auto p = scratch("total.csv");
    write_file(p, text);
    const auto t = load_trial(p, {});
    CHECK(t.frames() == static_cast<size_t>(rows));
    CHECK(t.markers.size() == static_cast<size_t>(markers));
    CHECK(io::read_text(p) == text);
  }
}

TEST_CASE("trial save/load round trip") {
  Trial t;
  t.id = 3;
  t.fs = 250.0;
  for (int i = 0; i < 50; ++i) t.time.push_back(i / 250.0);
  for (const char* name : {"foot_l", "pelvis"}) {
    auto& tr = t.markers[name];
    for (int i = 0; i < 50; ++i) {
      tr.x.push_back(std::sin(i * 0.1) / 3.0);
      tr.y.push_back(i * 0.012345678901234);
      tr.z.push_back(1.0 / (i + 7.0));
    }
  }
  t.gaze.emplace();
  for (int i = 0; i < 50; ++i) {
    t.gaze->x.push_back(0.1 * i);
    t.gaze->y.push_back(2.0 + 1e-9 * i);
  }
  const auto p = scratch("roundtrip.csv");
  save_trial(t, p);
  const auto back = load_trial(p, {.id = 3});
  CHECK(back.time == t.time);
  CHECK(back.markers.at("foot_l").x == t.markers.at("foot_l").x);
  CHECK(back.markers.at("pelvis").z == t.markers.at("pelvis").z);
  REQUIRE(back.gaze.has_value());
  CHECK(back.gaze->y == t.gaze->y);
}

TEST_CASE("report round trips") {
  const auto c = sample_curve();
  io::save_report(c, scratch("curve.json"));
  CHECK(io::load_curve(scratch("curve.json")) == c);

  cv::ModelScore s;
  s.models = {"GRU", "LI2"};
  s.score = {1.0 / 3.0, 0.7};
  s.normalized = {1.0 / 2.1, 1.0};
  s.psi = {0.0, 0.05, 0.1};
  s.critical = 0.1;
  s.zero_rmse = true;
  io::save_report(s, scratch("score.json"));
  CHECK(io::load_score(scratch("score.json")) == s);

  ts::TimescaleReport r;
  r.modality = "com";
  r.axis = 1;
  r.phases = c.phases;
  r.delta_r2 = c.r2[0];
  r.intercept = 0.123456789012345678;
  r.peak = {0.55, 0.3};
  r.breakpoint = 0.45;
  r.breakpoint_raw = 0.5;
  r.swing_initiation = 0.35;
  io::save_report(r, scratch("ts.json"));
  CHECK(io::load_timescale(scratch("ts.json")) == r);
  r.onset = 0.4;
  r.swing_initiation.reset();
  io::save_report(r, scratch("ts.json"));
  CHECK(io::load_timescale(scratch("ts.json")) == r);
}

TEST_CASE("report validation") {
  CHECK(thrown_kind([] { io::save_report(cv::EvalCurve{}, scratch("empty.json")); }) == ErrorKind::RejectedEmpty);
  io::save_report(sample_curve(), scratch("v.json"));
  auto text = io::read_text(scratch("v.json"));
  const auto pos = text.find("\"schema_version\": 1");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 19, "\"schema_version\": 2");
  write_file(scratch("v.json"), text);
  CHECK(thrown_kind([] { io::load_curve(scratch("v.json")); }) == ErrorKind::SchemaVersionMismatch);
  CHECK(thrown_kind([] { io::load_curve(scratch("missing.json")); }) == ErrorKind::IoFailure);
  io::save_report(sample_curve(), scratch("v.json"));
  CHECK(thrown_kind([] { io::load_score(scratch("v.json")); }) == ErrorKind::IoFailure);
}

TEST_CASE("linear checkpoint round trip") {
  const auto samples = random_samples(80, 4, 3, 2, 1);
  model::ModelSpec spec{model::Arch::LI2, {}, 4, 3, 2};
  spec.hp.lambda = 0.3;
  const auto m = model::fit_model(spec, samples, {}, {});
  io::save_checkpoint(m, scratch("li2.ckpt"));
  const auto back = io::load_checkpoint(scratch("li2.ckpt"), spec);
  REQUIRE(back.linear.size() == m.linear.size());
  for (const auto& [key, coef] : m.linear) {
    CHECK(back.linear.at(key).weights == coef.weights);
    CHECK(back.linear.at(key).intercept == coef.intercept);
  }
  CHECK(back.predict(samples) == m.predict(samples));
}

TEST_CASE("network checkpoint round trip is bit exact") {
  const auto samples = random_samples(60, 5, 2, 3, 2);
  const auto held_out = random_samples(17, 5, 2, 3, 3);
  const std::span<const Sample> all(samples);
  grad::TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.batch_size = 16;
  for (auto arch : {model::Arch::GRU, model::Arch::TCN, model::Arch::Transformer, model::Arch::FCNN}) {
    CAPTURE(model::to_string(arch));
    model::ModelSpec spec{arch, {}, 5, 2, 3};
    const auto m = model::fit_model(spec, all.first(45), all.subspan(45), cfg);
    const auto p = scratch("net.ckpt");
    io::save_checkpoint(m, p);
    const auto back = io::load_checkpoint(p, spec);
    CHECK((back.predict(held_out) - m.predict(held_out)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.training.best_epoch == m.training.best_epoch);
    CHECK(back.training.history.size() == m.training.history.size());
  }
}

TEST_CASE("checkpoint architecture mismatch") {
  const auto samples = random_samples(40, 3, 2, 2, 5);
  const std::span<const Sample> all(samples);
  grad::TrainConfig cfg;
  cfg.max_epochs = 2;
  model::ModelSpec spec{model::Arch::GRU, {}, 3, 2, 2};
  const auto m = model::fit_model(spec, all.first(30), all.subspan(30), cfg);
  io::save_checkpoint(m, scratch("gru.ckpt"));
  auto lstm = spec;
  lstm.arch = model::Arch::LSTM;
  CHECK(thrown_kind([&] { io::load_checkpoint(scratch("gru.ckpt"), lstm); }) == ErrorKind::ArchitectureMismatch);
  auto text = io::read_text(scratch("gru.ckpt"));
  text.pop_back();
  write_file(scratch("gru.ckpt"), text);
  CHECK(thrown_kind([&] { io::load_checkpoint(scratch("gru.ckpt")); }) == ErrorKind::IoFailure);
}

}  // TEST_SUITE
