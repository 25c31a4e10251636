#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "acceptance/harness.hpp"
#include "gaitscale/crossval.hpp"
#include "gaitscale/modelzoo.hpp"
#include "gaitscale/preprocess.hpp"
#include "gaitscale/rng.hpp"
#include "gaitscale/stats.hpp"

namespace acceptance {
namespace {

using namespace gaitscale;
using std::numbers::pi;

std::string num(double v, int digits = 3) {
  char buf[64];
  if (v != 0.0 && std::abs(v) < 1e-3) {
    std::snprintf(buf, sizeof buf, "%.2e", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  }
  return buf;
}

// ---- 1: model score -------------------------------------------------------

Outcome model_score_fidelity() {
  double worst = 0.0;
  auto track = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };

  std::map<std::string, std::vector<double>> rmse{{"A", {1.0, 1.0}}, {"B", {2.0, 1.0}}};
  auto s = cv::model_score(rmse, 0.05);
  track(s.score[0], 1.0);
  track(s.score[1], 0.75);
  track(s.normalized[0], 1.0);
  track(s.normalized[1], 0.75);

  rmse = {{"A", {0.5, 0.7, 0.9}}, {"B", {1.0, 1.4, 0.9}}, {"C", {0.25, 2.8, 3.6}}};
  s = cv::model_score(rmse, 0.1);
  track(s.score[0], (0.5 + 1.0 + 1.0) / 3.0);
  track(s.score[1], (0.25 + 0.5 + 1.0) / 3.0);
  track(s.score[2], (1.0 + 0.25 + 0.25) / 3.0);
  track(s.normalized[1], 1.75 / 2.5);
  track(s.normalized[2], 1.5 / 2.5);

  Rng rng(20240501);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  std::uniform_int_distribution<int> models(2, 6), crit(0, kPhaseCount - 1);
  bool bounded = true;
  for (int set = 0; set < 1000; ++set) {
    const int m = models(rng), c = crit(rng);
    std::map<std::string, std::vector<double>> curves;
    for (int k = 0; k < m; ++k) {
      std::vector<double> v(kPhaseCount);
      for (auto& x : v) x = u(rng);
      curves["m" + std::to_string(k)] = v;
    }
    const auto got = cv::model_score(curves, phase_value(c));
    std::vector<double> hand;
    for (const auto& [name, curve] : curves) {
      double acc = 0.0;
      for (int i = 0; i <= c; ++i) {
        double best = curve[i];
        for (const auto& [other, oc] : curves) best = std::min(best, oc[i]);
        acc += best / curve[i];
      }
      hand.push_back(acc / (c + 1));
    }
    const double top = *std::max_element(hand.begin(), hand.end());
    int at_one = 0;
    for (size_t k = 0; k < hand.size(); ++k) {
      track(got.score[k], hand[k]);
      track(got.normalized[k], hand[k] / top);
      bounded = bounded && got.normalized[k] > 0.0 && got.normalized[k] <= 1.0;
      at_one += got.normalized[k] == 1.0;
    }
    bounded = bounded && at_one >= 1;
  }
  return {worst <= 1e-12 && bounded,
          "max |s - hand| = " + num(worst) + ", normalized in (0,1] on 1000 sets: " + (bounded ? "yes" : "no")};
}

// ---- 2: linear oracle -----------------------------------------------------

// Gaussian elimination with partial pivoting on the normal equations.
Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::MatrixXd A = X.transpose() * X;
  Eigen::VectorXd b = X.transpose() * y;
  const int n = static_cast<int>(A.rows());
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::abs(A(r, col)) > std::abs(A(piv, col))) piv = r;
    }
    A.row(col).swap(A.row(piv));
    std::swap(b(col), b(piv));
    for (int r = col + 1; r < n; ++r) {
      const double f = A(r, col) / A(col, col);
      A.row(r) -= f * A.row(col);
      b(r) -= f * b(col);
    }
  }
  Eigen::VectorXd x(n);
  for (int r = n - 1; r >= 0; --r) {
    double acc = b(r);
    for (int c = r + 1; c < n; ++c) acc -= A(r, c) * x(c);
    x(r) = acc / A(r, r);
  }
  return x;
}

double rel_err(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-300);
}

Outcome linear_oracle() {
  Rng rng(77);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst_oracle = 0.0, worst_ridge = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const model::Arch arch = inst % 2 == 0 ? model::Arch::LI : model::Arch::LH;
    const int steps = arch == model::Arch::LI ? 1 + inst % 7 : 1 + inst % 5;
    const int max_m = arch == model::Arch::LI ? 50 : 50 / steps;
    const int m = 1 + static_cast<int>(std::uniform_int_distribution<int>(0, max_m - 1)(rng));
    const int p = arch == model::Arch::LI ? m : steps * m;
    const int n = std::uniform_int_distribution<int>(p + 5, 200)(rng);

    std::vector<Sample> samples(n);
    Eigen::VectorXd beta_ml = Eigen::VectorXd::NullaryExpr(p, [&] { return g(rng); });
    Eigen::VectorXd beta_ap = Eigen::VectorXd::NullaryExpr(p, [&] { return g(rng); });
    for (auto& s : samples) {
      s.S = Eigen::MatrixXd::NullaryExpr(steps, m, [&] { return g(rng); });
      const Eigen::RowVectorXd d = model::linear_design(arch, s.S);
      s.y.ml = d.dot(beta_ml) + 0.7 + 0.1 * g(rng);
      s.y.ap = d.dot(beta_ap) - 1.2 + 0.1 * g(rng);
    }

    Eigen::MatrixXd X(n, p + 1);
    Eigen::MatrixXd Y(n, 2);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = 1.0;
      X.row(i).tail(p) = model::linear_design(arch, samples[i].S);
      Y.row(i) << samples[i].y.ml, samples[i].y.ap;
    }
    Eigen::MatrixXd ref(p + 1, 2);
    for (int k = 0; k < 2; ++k) ref.col(k) = solve_normal_equations(X, Y.col(k));

    const auto fit = model::fit_linear(samples, arch, 0.0);
    Eigen::MatrixXd got(p + 1, 2);
    got.row(0) = fit.intercept;
    got.bottomRows(p) = fit.weights;
    worst_oracle = std::max(worst_oracle, rel_err(got, ref));

    const auto ridge = model::fit_linear(samples, arch == model::Arch::LI ? model::Arch::LI2 : model::Arch::LH2, 0.0);
    Eigen::MatrixXd got2(p + 1, 2);
    got2.row(0) = ridge.intercept;
    got2.bottomRows(p) = ridge.weights;
    worst_ridge = std::max(worst_ridge, rel_err(got2, got));
  }
  return {worst_oracle < 1e-8 && worst_ridge < 1e-8,
          "max rel err vs normal equations = " + num(worst_oracle) + ", ridge(0) vs OLS = " + num(worst_ridge)};
}

// ---- 6: nested CV integrity -----------------------------------------------

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
    s.y.ap = 0.5 * s.S(steps - 1, m - 1) - s.flag + 0.3 * g(rng);
  }
  return out;
}

Outcome cv_integrity() {
  bool partition = true;
  for (int n : {25, 26, 47, 103, 500}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto plan = cv::make_fold_plan(n, seed);
      std::vector<int> tested(n, 0);
      for (int k = 0; k < cv::kFolds; ++k) {
        for (int i : plan.outer_test(k)) ++tested[i];
        const auto train = plan.outer_train(k);
        std::vector<int> validated(n, 0);
        for (int j = 0; j < cv::kFolds; ++j) {
          for (int i : plan.inner_val(k, j)) ++validated[i];
          partition = partition && plan.inner_val(k, j).size() + plan.inner_train(k, j).size() == train.size();
        }
        std::vector<int> in_train(n, 0);
        for (int i : train) ++in_train[i];
        for (int i = 0; i < n; ++i) partition = partition && in_train[i] <= 1 && validated[i] == in_train[i];
      }
      partition = partition && std::all_of(tested.begin(), tested.end(), [](int c) { return c == 1; });
    }
  }

  bool leak_free = true;
  for (model::Arch arch : {model::Arch::FCNN, model::Arch::LI2}) {
    auto samples = random_task(60, 3, 2, 3, 8);
    const auto plan = cv::make_fold_plan(60, 2);
    cv::CvOptions opt;
    opt.budget = 3;
    opt.train.max_epochs = 5;
    opt.train.batch_size = 8;
    opt.jobs = 3;
    model::Hyperparams base;
    base.lambda = 0.5;
    const auto before = cv::nested_cv_evaluate(samples, arch, base, plan, opt);
    for (int k = 0; k < cv::kFolds; ++k) {
      auto scrambled_set = samples;
      const auto test = plan.outer_test(k);
      for (size_t i = 0; i < test.size(); ++i) {
        scrambled_set[test[i]].y.ml = 50.0 + static_cast<double>(i);
        scrambled_set[test[(i + 1) % test.size()]].y.ap = -3.0 * static_cast<double>(i);
      }
      const auto after = cv::nested_cv_evaluate(scrambled_set, arch, base, plan, opt);
      leak_free = leak_free && after.selected[k] == before.selected[k];
      for (int i : test) leak_free = leak_free && after.predictions.row(i) == before.predictions.row(i);
    }
  }
  return {partition && leak_free, std::string("partition exact: ") + (partition ? "yes" : "no") +
                                      ", scrambled outer-test targets change nothing: " + (leak_free ? "yes" : "no")};
}

// ---- 7: signal processing -------------------------------------------------

Outcome signal_processing() {
  const double fs = 100.0, fc = 6.0;
  std::vector<double> x(4000);
  for (size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * pi * fc * i / fs);
  const auto y = butterworth_lowpass_zerolag(x, fs, fc);
  double peak = 0.0;
  for (size_t i = 500; i < 3500; ++i) peak = std::max(peak, std::abs(y[i]));
  const bool gain_ok = std::abs(peak - 0.5) <= 0.02 * 0.5;

  Rng rng(4);
  std::normal_distribution<double> g;
  std::vector<double> mix(3000, 0.0);
  for (int k = 1; k <= 10; ++k) {
    const double a = g(rng), ph = g(rng);
    for (size_t i = 0; i < mix.size(); ++i) mix[i] += a * std::sin(2 * pi * 0.5 * k * i / fs + ph);
  }
  const auto ym = butterworth_lowpass_zerolag(mix, fs, fc);
  int best_lag = 0;
  double best = -1e300;
  for (int lag = -25; lag <= 25; ++lag) {
    double acc = 0.0;
    for (int i = 200; i < 2800; ++i) acc += mix[i] * ym[i + lag];
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }

  const double dt = 0.01;
  std::vector<double> cubic(60);
  for (size_t i = 0; i < cubic.size(); ++i) {
    const double t = i * dt;
    cubic[i] = 2.0 * t * t * t - t * t + 0.5 * t + 3.0;
  }
  const auto v = finite_difference_velocity(cubic, dt);
  double stencil = 0.0;
  for (size_t i = 2; i + 2 < cubic.size(); ++i) {
    const double t = i * dt;
    stencil = std::max(stencil, std::abs(v[i] - (6.0 * t * t - 2.0 * t + 0.5)));
  }
  return {gain_ok && best_lag == 0 && stencil <= 1e-12,
          "gain at fc = " + num(peak, 4) + ", xcorr peak lag = " + std::to_string(best_lag) +
              ", cubic stencil max err = " + num(stencil)};
}

// ---- 8: statistics --------------------------------------------------------

double enumerate_p(const std::vector<double>& d) {
  std::vector<std::pair<double, bool>> mag;
  for (double v : d) mag.push_back({std::abs(v), v > 0});
  std::sort(mag.begin(), mag.end());
  const int n = static_cast<int>(d.size());
  double observed = 0.0;
  for (int i = 0; i < n; ++i) observed += mag[i].second ? i + 1 : 0;
  int hits = 0;
  for (int mask = 0; mask < (1 << n); ++mask) {
    double w = 0.0;
    for (int i = 0; i < n; ++i) w += (mask >> i & 1) ? i + 1 : 0;
    hits += w >= observed - 1e-9;
  }
  return hits / std::pow(2.0, n);
}

Outcome statistics() {
  const std::vector<double> three{0.4, 1.1, 2.5}, five{0.2, 0.9, 1.3, 2.0, 3.1};
  const double p3 = stats::wilcoxon_signed_rank_one_sided(three).p_value;
  const double p5 = stats::wilcoxon_signed_rank_one_sided(five).p_value;
  bool exact = std::abs(p3 - 1.0 / 8) < 1e-15 && std::abs(p5 - 1.0 / 32) < 1e-15;

  Rng rng(31);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int n = 1; n <= stats::kExactWilcoxonMax; ++n) {
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> d(n);
      for (int i = 0; i < n; ++i) d[i] = (i + 1 + 0.01 * std::abs(g(rng))) * (g(rng) > 0 ? 1 : -1);
      std::shuffle(d.begin(), d.end(), rng);
      exact = exact && std::abs(stats::wilcoxon_signed_rank_one_sided(d).p_value - enumerate_p(d)) < 1e-12;
    }
  }

  std::string rates;
  bool null_ok = true;
  for (int n : {6, 10, 20}) {
    int reject = 0;
    std::vector<double> d(n);
    for (int sim = 0; sim < 10000; ++sim) {
      for (auto& v : d) v = g(rng);
      reject += stats::wilcoxon_signed_rank_one_sided(d).p_value < 0.05;
    }
    const double rate = reject / 10000.0;
    null_ok = null_ok && rate <= 0.055;
    rates += (rates.empty() ? "" : "/") + num(rate, 4);
  }

  std::vector<double> x(40), y(40);
  for (int i = 0; i < 40; ++i) {
    x[i] = g(rng);
    y[i] = 0.8 * x[i] + g(rng);
  }
  const auto b1 = stats::bootstrap_slope(x, y, 500, 9);
  const auto b2 = stats::bootstrap_slope(x, y, 500, 9);
  const auto b3 = stats::bootstrap_slope(x, y, 500, 10);
  const bool boot = b1.replicates == b2.replicates && b1.median == b2.median && b1.replicates != b3.replicates;

  return {exact && null_ok && boot, std::string("exact p (n=3: ") + num(p3, 6) + ", n=5: " + num(p5, 6) +
                                        ", enumeration n<=12: " + (exact ? "match" : "mismatch") +
                                        "), null rejection n=6/10/20 = " + rates +
                                        ", bootstrap deterministic: " + (boot ? "yes" : "no")};
}

// ---- 10: hyperparameter spaces --------------------------------------------

Outcome spaces() {
  using model::Arch;
  using model::Hyperparams;
  bool ok = true;
  auto same_set = [&](Arch arch, const std::set<std::vector<double>>& expected,
                      const std::function<std::vector<double>(const Hyperparams&)>& key) {
    const auto space = cv::hyperparam_space(arch);
    std::set<std::vector<double>> got;
    for (const auto& h : space) got.insert(key(h));
    ok = ok && got == expected && got.size() == space.size();
  };
  const std::vector<double> drop{0.0, 0.1, 0.2, 0.3};

  std::set<std::vector<double>> rec;
  for (int h : {2, 4, 8, 16, 32, 64, 128, 256}) rec.insert({double(h)});
  same_set(Arch::GRU, rec, [](const Hyperparams& h) { return std::vector<double>{double(h.hidden_dim)}; });
  same_set(Arch::LSTM, rec, [](const Hyperparams& h) { return std::vector<double>{double(h.hidden_dim)}; });

  std::set<std::vector<double>> fcnn;
  for (int d : {2, 4, 8, 16}) {
    for (double p : drop) fcnn.insert({double(d), p});
  }
  same_set(Arch::FCNN, fcnn, [](const Hyperparams& h) { return std::vector<double>{double(h.decay), h.dropout}; });

  std::set<std::vector<double>> tcn;
  for (int h : {4, 8, 16}) {
    for (int k : {1, 3, 5, 7}) {
      for (int d : {1, 2, 4}) {
        for (double p : drop) tcn.insert({double(h), double(k), double(d), p});
      }
    }
  }
  same_set(Arch::TCN, tcn, [](const Hyperparams& h) {
    return std::vector<double>{double(h.hidden_dim), double(h.kernel), double(h.dilation), h.dropout};
  });

  std::set<std::vector<double>> tr;
  for (int h : {16, 32, 64}) {
    for (int l : {2, 3, 4}) {
      for (int hd : {2, 4, 8}) {
        for (int f : {16, 32, 64}) {
          for (double p : drop) tr.insert({double(h), double(l), double(hd), double(f), p});
        }
      }
    }
  }
  same_set(Arch::Transformer, tr, [](const Hyperparams& h) {
    return std::vector<double>{double(h.hidden_dim), double(h.num_layers), double(h.num_heads), double(h.ff_dim),
                               h.dropout};
  });

  const auto gru = cv::search_strategy(cv::hyperparam_space(Arch::GRU).size());
  const auto tcn_s = cv::search_strategy(cv::hyperparam_space(Arch::TCN).size());
  const auto tr_s = cv::search_strategy(cv::hyperparam_space(Arch::Transformer).size());
  ok = ok && gru.kind == cv::SearchKind::Grid && tcn_s.kind == cv::SearchKind::Random && tcn_s.draws == 100 &&
       tr_s.kind == cv::SearchKind::Random && tr_s.draws == 100;
  return {ok, "GRU " + std::to_string(cv::hyperparam_space(Arch::GRU).size()) + " -> grid, TCN " +
                  std::to_string(cv::hyperparam_space(Arch::TCN).size()) + " -> random(" +
                  std::to_string(tcn_s.draws) + "), Transformer " +
                  std::to_string(cv::hyperparam_space(Arch::Transformer).size()) + " -> random(" +
                  std::to_string(tr_s.draws) + "), lists verbatim: " + (ok ? "yes" : "no")};
}

}  // namespace

std::vector<Criterion> formula_criteria() {
  return {
      {1, "model score formula", 1.0, model_score_fidelity},
      {2, "linear oracle equivalence", 30.0, linear_oracle},
      {6, "nested CV integrity", 60.0, cv_integrity},
      {7, "signal processing", 5.0, signal_processing},
      {8, "statistics", 60.0, statistics},
      {10, "hyperparameter spaces", 1.0, spaces},
  };
}

}  // namespace acceptance
