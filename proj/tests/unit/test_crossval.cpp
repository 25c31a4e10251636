#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "gaitscale/crossval.hpp"
#include "gaitscale/rng.hpp"
#include "gaitscale/synthgait.hpp"
#include "support/expect_error.hpp"

using namespace gaitscale;
using namespace gaitscale::cv;
using gaitscale::testing::thrown_kind;

namespace {

std::vector<int> sizes_of(const std::vector<int>& fold) {
  std::vector<int> s(kFolds, 0);
  for (int f : fold) {
    if (f >= 0) ++s[f];
  }
  return s;
}

std::vector<Sample> random_task(int n, int steps, int m, int trials, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Sample> out(n);
  for (int i = 0; i < n; ++i) {
    auto& s = out[i];
    s.S = Eigen::MatrixXd::NullaryExpr(steps, m, [&] { return g(rng); });
    s.trial = i % trials;
    s.flag = (i / trials) % 2;
    s.y.ml = s.S(steps - 1, 0) + 0.3 * g(rng);
    s.y.ap = -s.S(steps - 1, 1) + 0.3 * g(rng);
  }
  return out;
}

std::vector<double> grid(std::function<double(double)> f) {
  std::vector<double> v;
  for (int i = 0; i <= 20; ++i) v.push_back(f(i / 20.0));
  return v;
}

}  // namespace

TEST_SUITE("crossval") {

TEST_CASE("fold plan sizes") {
  const auto p25 = make_fold_plan(25, 1);
  CHECK(sizes_of(p25.outer) == std::vector<int>{5, 5, 5, 5, 5});
  for (int k = 0; k < kFolds; ++k) CHECK(sizes_of(p25.inner[k]) == std::vector<int>{4, 4, 4, 4, 4});
  const auto p27 = make_fold_plan(27, 1);
  CHECK(sizes_of(p27.outer) == std::vector<int>{6, 6, 5, 5, 5});
  CHECK(thrown_kind([] { make_fold_plan(24, 1); }) == ErrorKind::TooFewSamples);
}

TEST_CASE("fold plan is deterministic and partitions the samples") {
  const auto a = make_fold_plan(103, 9), b = make_fold_plan(103, 9), c = make_fold_plan(103, 10);
  CHECK(a.outer == b.outer);
  CHECK(a.inner == b.inner);
  CHECK(a.outer != c.outer);
  std::vector<int> tested(103, 0), trained(103, 0);
  for (int k = 0; k < kFolds; ++k) {
    for (int i : a.outer_test(k)) ++tested[i];
    for (int i : a.outer_train(k)) ++trained[i];
    std::set<int> inner_union;
    for (int j = 0; j < kFolds; ++j) {
      const auto tr = a.inner_train(k, j), va = a.inner_val(k, j);
      CHECK(tr.size() + va.size() == a.outer_train(k).size());
      for (int i : va) {
        CHECK(a.outer[i] != k);
        inner_union.insert(i);
      }
    }
    CHECK(inner_union.size() == a.outer_train(k).size());
  }
  for (int i = 0; i < 103; ++i) {
    CHECK(tested[i] == 1);
    CHECK(trained[i] == 4);
  }
}

TEST_CASE("hyperparameter spaces and search strategy") {
  using model::Arch;
  CHECK(hyperparam_space(Arch::GRU).size() == 8);
  CHECK(hyperparam_space(Arch::LSTM).size() == 8);
  CHECK(hyperparam_space(Arch::FCNN).size() == 16);
  CHECK(hyperparam_space(Arch::TCN).size() == 144);
  CHECK(hyperparam_space(Arch::Transformer).size() == 324);
  CHECK(hyperparam_space(Arch::LI2).size() == 1);
  CHECK(search_strategy(8).kind == SearchKind::Grid);
  CHECK(search_strategy(100).kind == SearchKind::Grid);
  const auto r = search_strategy(324);
  CHECK(r.kind == SearchKind::Random);
  CHECK(r.draws == 100);
  const auto picks = select_configs(324, 100, 5);
  CHECK(picks.size() == 100);
  CHECK(std::set<int>(picks.begin(), picks.end()).size() == 100);
  CHECK(std::is_sorted(picks.begin(), picks.end()));
  CHECK(picks == select_configs(324, 100, 5));
  CHECK(select_configs(8, 100, 5) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("pooled training-mean predictor has R2 near zero") {
  const int n = 1000;
  Rng rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd y(n, 2);
  for (int i = 0; i < n; ++i) y.row(i) << g(rng), 5.0 + 2.0 * g(rng);
  const auto plan = make_fold_plan(n, 4);
  Eigen::MatrixXd pred(n, 2);
  for (int k = 0; k < kFolds; ++k) {
    Eigen::RowVector2d mean = Eigen::RowVector2d::Zero();
    const auto train = plan.outer_train(k);
    for (int i : train) mean += y.row(i) / static_cast<double>(train.size());
    for (int i : plan.outer_test(k)) pred.row(i) = mean;
  }
  const auto m = metrics(pred, y);
  CHECK(std::abs(m.r2[0]) < 0.03);
  CHECK(std::abs(m.r2[1]) < 0.03);
}

TEST_CASE("constant predictions give negative R2") {
  Eigen::MatrixXd y(4, 2), p(4, 2);
  y << 0, 0, 1, 1, 2, 2, 3, 3;
  p.setConstant(10.0);
  const auto m = metrics(p, y);
  CHECK(m.r2[0] < 0.0);
  CHECK(m.rmse[0] == doctest::Approx(std::sqrt((100 + 81 + 64 + 49) / 4.0)));
  CHECK(m.rmse_pooled == doctest::Approx(m.rmse[0]));
}

TEST_CASE("noiseless synthetic task: LI reaches the ceiling after the control phase") {
  synth::SynthConfig c;
  c.n_trials = 3;
  c.strides_per_trial = 40;
  c.sigma_eps = 0.0;
  c.marker_noise = 0.0;
  const auto out = synth::generate(c);
  std::vector<ProcessedTrial> trials;
  for (const auto& t : out.dataset.trials) trials.push_back(preprocess_trial(t, synth::preprocess_config()));
  const auto samples = build_samples(trials, ModalitySpec{}, 0.75);
  const auto plan = make_fold_plan(static_cast<int>(samples.size()), 1);
  const auto r = nested_cv_evaluate(samples, model::Arch::LI, {}, plan, {});
  CHECK(r.pooled.r2[0] > 0.999);
  CHECK(r.pooled.r2[1] > 0.999);
}

TEST_CASE("outer-test targets never influence tuning or predictions") {
  auto samples = random_task(40, 3, 2, 2, 8);
  const auto plan = make_fold_plan(40, 2);
  CvOptions opt;
  opt.budget = 2;
  opt.train.max_epochs = 4;
  opt.train.batch_size = 8;
  opt.jobs = 3;
  const auto base = nested_cv_evaluate(samples, model::Arch::FCNN, {}, plan, opt);
  const int k = 2;
  const auto test = plan.outer_test(k);
  for (size_t i = 0; i < test.size(); ++i) {
    samples[test[i]].y.ml = 100.0 + static_cast<double>(i);
    samples[test[(i + 1) % test.size()]].y.ap = -7.0 * static_cast<double>(i);
  }
  const auto scrambled = nested_cv_evaluate(samples, model::Arch::FCNN, {}, plan, opt);
  CHECK(scrambled.selected[k] == base.selected[k]);
  for (int i : test) CHECK(scrambled.predictions.row(i) == base.predictions.row(i));
}

TEST_CASE("parallel evaluation matches serial evaluation") {
  const auto samples = random_task(30, 3, 2, 2, 9);
  const auto plan = make_fold_plan(30, 3);
  CvOptions opt;
  opt.budget = 2;
  opt.train.max_epochs = 3;
  const auto serial = nested_cv_evaluate(samples, model::Arch::GRU, {}, plan, opt);
  opt.jobs = 4;
  const auto parallel = nested_cv_evaluate(samples, model::Arch::GRU, {}, plan, opt);
  CHECK(serial.predictions == parallel.predictions);
}

TEST_CASE("model score examples") {
  std::map<std::string, std::vector<double>> rmse{{"A", {1.0, 1.0}}, {"B", {2.0, 1.0}}};
  const auto s = model_score(rmse, 0.05);
  CHECK(s.score[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.score[1] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(s.normalized[1] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(s.psi == std::vector<double>{0.0, 0.05});
  CHECK(!s.zero_rmse);

  rmse["B"] = {2.0, 3.0};
  rmse["A"] = {0.0, 1.0};
  const auto z = model_score(rmse, 0.05);
  CHECK(z.zero_rmse);
  CHECK(z.score[0] == doctest::Approx(1.0));
  CHECK(z.score[1] == doctest::Approx((0.0 + 1.0 / 3.0) / 2.0));
  CHECK(thrown_kind([&] { model_score(rmse, 0.5); }) == ErrorKind::GridMismatch);
  CHECK(thrown_kind([&] { model_score(rmse, 0.33); }) == ErrorKind::InvalidPhase);
}

TEST_CASE("scaling a model's RMSE lowers its score") {
  Rng rng(6);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::map<std::string, std::vector<double>> rmse;
    for (const char* m : {"a", "b", "c"}) rmse[m] = grid([&](double) { return u(rng); });
    const auto before = model_score(rmse, 0.5);
    for (double& v : rmse["b"]) v *= 1.3;
    const auto after = model_score(rmse, 0.5);
    CHECK(after.score[1] < before.score[1]);
    CHECK(after.normalized[1] <= before.normalized[1] + 1e-15);
    for (double v : after.normalized) {
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("lowess oracles") {
  const auto flat = smooth_curve(grid([](double) { return 0.4; }));
  for (double v : flat.values) CHECK(v == doctest::Approx(0.4).epsilon(1e-12));
  const auto line = grid([](double x) { return 0.2 + 0.7 * x; });
  const auto sl = smooth_curve(line);
  for (size_t i = 0; i < line.size(); ++i) CHECK(std::abs(sl.values[i] - line[i]) < 1e-9);
  auto spike = grid([](double) { return 0.0; });
  spike[10] = 1.0;
  const auto ss = smooth_curve(spike);
  CHECK(ss.values[10] <= 0.5);
  CHECK(ss.residual_bound >= 0.5);
  const std::vector<double> short_curve{1, 2, 3, 4};
  CHECK(thrown_kind([&] { smooth_curve(short_curve); }) == ErrorKind::TooFewPoints);
}

TEST_CASE("natural cubic spline") {
  std::vector<double> x{0.0, 0.25, 0.5, 0.75, 1.0}, y{0.0, 1.0, 0.0, 1.0, 0.0};
  const NaturalCubicSpline s(x, y);
  for (size_t i = 0; i < x.size(); ++i) CHECK(s(x[i]) == doctest::Approx(y[i]).epsilon(1e-12));
  const NaturalCubicSpline lin({0.0, 0.5, 1.0}, {1.0, 2.0, 3.0});
  CHECK(lin(0.3) == doctest::Approx(1.6).epsilon(1e-12));
  // natural boundary: zero curvature at the ends
  const double h = 1e-4;
  CHECK(std::abs(s(0.0) - 2 * s(h) + s(2 * h)) / (h * h) < 1e-3 * 100);
}

TEST_CASE("critical phase") {
  const auto baseline = grid([](double) { return 1.0; });
  auto dip = baseline;
  dip[8] = 0.5;
  CHECK(critical_phase(dip, baseline) == doctest::Approx(0.4));
  CHECK(critical_phase(baseline, baseline) == 0.0);
  const auto rising = grid([](double x) { return 1.0 - 0.5 * x; });
  CHECK(critical_phase(rising, baseline) == 1.0);
}

TEST_CASE("score bands") {
  CHECK(score_band(1.0) == "dark_green");
  CHECK(score_band(0.98) == "dark_green");
  CHECK(score_band(0.97) == "light_green");
  CHECK(score_band(0.92) == "orange");
  CHECK(score_band(0.5) == "red");
}

}  // TEST_SUITE
