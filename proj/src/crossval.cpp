#include "gaitscale/crossval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gaitscale/error.hpp"
#include "gaitscale/parallel.hpp"
#include "gaitscale/rng.hpp"

namespace gaitscale::cv {

using model::Arch;
using model::Hyperparams;

namespace {

std::vector<int> fold_sizes(int n) {
  std::vector<int> sizes(kFolds, n / kFolds);
  for (int f = 0; f < n % kFolds; ++f) ++sizes[f];
  return sizes;
}

std::vector<int> assign(std::vector<int> members, Rng& rng, int n_total) {
  std::shuffle(members.begin(), members.end(), rng);
  std::vector<int> fold(static_cast<size_t>(n_total), -1);
  const auto sizes = fold_sizes(static_cast<int>(members.size()));
  size_t pos = 0;
  for (int f = 0; f < kFolds; ++f) {
    for (int i = 0; i < sizes[f]; ++i) fold[static_cast<size_t>(members[pos++])] = f;
  }
  return fold;
}

std::vector<int> where(const std::vector<int>& fold, auto pred) {
  std::vector<int> out;
  for (size_t i = 0; i < fold.size(); ++i) {
    if (pred(fold[i])) out.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace

std::vector<int> FoldPlan::outer_test(int k) const { return where(outer, [k](int f) { return f == k; }); }
std::vector<int> FoldPlan::outer_train(int k) const { return where(outer, [k](int f) { return f != k; }); }
std::vector<int> FoldPlan::inner_val(int k, int j) const { return where(inner[k], [j](int f) { return f == j; }); }
std::vector<int> FoldPlan::inner_train(int k, int j) const {
  return where(inner[k], [j](int f) { return f >= 0 && f != j; });
}

FoldPlan make_fold_plan(int n, std::uint64_t seed) {
  if (n < kFolds * kFolds) {
    fail(ErrorKind::TooFewSamples, "nested 5x5 cross-validation needs >= 25 samples, got " + std::to_string(n));
  }
  FoldPlan plan;
  plan.n = n;
  plan.seed = seed;
  std::vector<int> all(static_cast<size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  Rng rng(derive_seed(seed, {0x6f75746572ULL}));
  plan.outer = assign(all, rng, n);
  for (int k = 0; k < kFolds; ++k) {
    Rng inner_rng(derive_seed(seed, {0x696e6e6572ULL, static_cast<std::uint64_t>(k)}));
    plan.inner.push_back(assign(plan.outer_train(k), inner_rng, n));
  }
  return plan;
}

std::vector<Hyperparams> hyperparam_space(Arch arch, const Hyperparams& base) {
  std::vector<Hyperparams> out;
  const double dropouts[] = {0.0, 0.1, 0.2, 0.3};
  switch (arch) {
    case Arch::GRU:
    case Arch::LSTM:
      for (int h : {2, 4, 8, 16, 32, 64, 128, 256}) {
        Hyperparams p = base;
        p.hidden_dim = h;
        out.push_back(p);
      }
      break;
    case Arch::FCNN:
      for (int d : {2, 4, 8, 16}) {
        for (double dr : dropouts) {
          Hyperparams p = base;
          p.decay = d;
          p.dropout = dr;
          out.push_back(p);
        }
      }
      break;
    case Arch::TCN:
      for (int h : {4, 8, 16}) {
        for (int k : {1, 3, 5, 7}) {
          for (int d : {1, 2, 4}) {
            for (double dr : dropouts) {
              Hyperparams p = base;
              p.hidden_dim = h;
              p.kernel = k;
              p.dilation = d;
              p.dropout = dr;
              out.push_back(p);
            }
          }
        }
      }
      break;
    case Arch::Transformer:
      for (int h : {16, 32, 64}) {
        for (int l : {2, 3, 4}) {
          for (int heads : {2, 4, 8}) {
            for (int ff : {16, 32, 64}) {
              for (double dr : dropouts) {
                Hyperparams p = base;
                p.hidden_dim = h;
                p.num_layers = l;
                p.num_heads = heads;
                p.ff_dim = ff;
                p.dropout = dr;
                out.push_back(p);
              }
            }
          }
        }
      }
      break;
    default: out.push_back(base); break;
  }
  return out;
}

SearchStrategy search_strategy(std::size_t space_size, int budget) {
  if (space_size == 0) fail(ErrorKind::InvalidSpec, "empty hyperparameter space");
  if (space_size <= static_cast<std::size_t>(budget)) return {SearchKind::Grid, static_cast<int>(space_size)};
  return {SearchKind::Random, budget};
}

std::vector<int> select_configs(std::size_t space_size, int budget, std::uint64_t seed) {
  const auto strategy = search_strategy(space_size, budget);
  std::vector<int> idx(space_size);
  std::iota(idx.begin(), idx.end(), 0);
  if (strategy.kind == SearchKind::Grid) return idx;
  Rng rng(derive_seed(seed, {0x687073ULL}));
  for (int i = 0; i < strategy.draws; ++i) {
    std::uniform_int_distribution<int> pick(i, static_cast<int>(space_size) - 1);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(pick(rng))]);
  }
  idx.resize(static_cast<size_t>(strategy.draws));
  std::sort(idx.begin(), idx.end());
  return idx;
}

AxisMetrics metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != 2 || truth.cols() != 2) {
    fail(ErrorKind::ShapeMismatch, "prediction and target shapes differ");
  }
  if (truth.rows() < 2) fail(ErrorKind::TooFewSamples, "metrics need at least two rows");
  AxisMetrics m;
  double sse_all = 0.0;
  for (int a = 0; a < 2; ++a) {
    const double sse = (pred.col(a) - truth.col(a)).squaredNorm();
    const double sst = (truth.col(a).array() - truth.col(a).mean()).square().sum();
    if (sst <= 0.0) fail(ErrorKind::ConstantInput, "targets have zero variance on one axis");
    m.r2[a] = 1.0 - sse / sst;
    m.rmse[a] = std::sqrt(sse / static_cast<double>(truth.rows()));
    sse_all += sse;
  }
  m.rmse_pooled = std::sqrt(sse_all / (2.0 * static_cast<double>(truth.rows())));
  return m;
}

namespace {

std::vector<Sample> gather(std::span<const Sample> samples, const std::vector<int>& idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(samples[static_cast<size_t>(i)]);
  return out;
}

Eigen::MatrixXd targets_of(std::span<const Sample> samples) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(samples.size()), 2);
  for (size_t i = 0; i < samples.size(); ++i) {
    y(static_cast<Eigen::Index>(i), 0) = samples[i].y.ml;
    y(static_cast<Eigen::Index>(i), 1) = samples[i].y.ap;
  }
  return y;
}

grad::TrainConfig seeded(const grad::TrainConfig& base, std::uint64_t seed) {
  grad::TrainConfig c = base;
  c.seed = seed;
  return c;
}

}  // namespace

PhaseResult nested_cv_evaluate(std::span<const Sample> samples, Arch arch, const Hyperparams& base,
                               const FoldPlan& plan, const CvOptions& options) {
  if (static_cast<int>(samples.size()) != plan.n) {
    fail(ErrorKind::ShapeMismatch, "fold plan covers " + std::to_string(plan.n) + " samples, got " +
                                       std::to_string(samples.size()));
  }
  model::ModelSpec proto;
  proto.arch = arch;
  proto.steps = static_cast<int>(samples.front().S.rows());
  proto.features = static_cast<int>(samples.front().S.cols());
  for (const auto& s : samples) proto.trials = std::max(proto.trials, s.trial + 1);

  const auto space = options.tune ? hyperparam_space(arch, base) : std::vector<Hyperparams>{base};
  const auto chosen = select_configs(space.size(), options.budget, options.seed);
  const int nc = static_cast<int>(chosen.size());

  std::vector<int> best(kFolds, chosen.front());
  if (nc > 1) {
    std::vector<double> loss(static_cast<size_t>(kFolds * nc * kFolds), 0.0);
    parallel_for(kFolds * nc * kFolds, options.jobs, [&](int task) {
      const int k = task / (nc * kFolds), ci = (task / kFolds) % nc, j = task % kFolds;
      model::ModelSpec spec = proto;
      spec.hp = space[static_cast<size_t>(chosen[static_cast<size_t>(ci)])];
      const auto train = gather(samples, plan.inner_train(k, j));
      const auto val = gather(samples, plan.inner_val(k, j));
      const auto cfg = seeded(options.train, derive_seed(options.seed, {1, static_cast<std::uint64_t>(k),
                                                                        static_cast<std::uint64_t>(chosen[ci]),
                                                                        static_cast<std::uint64_t>(j)}));
      const auto m = model::fit_model(spec, train, val, cfg);
      const Eigen::MatrixXd diff = m.predict(val) - targets_of(val);
      loss[static_cast<size_t>(task)] = diff.squaredNorm() / static_cast<double>(diff.size());
    });
    for (int k = 0; k < kFolds; ++k) {
      double best_loss = std::numeric_limits<double>::infinity();
      for (int ci = 0; ci < nc; ++ci) {
        double mean = 0.0;
        for (int j = 0; j < kFolds; ++j) mean += loss[static_cast<size_t>((k * nc + ci) * kFolds + j)] / kFolds;
        if (mean < best_loss) {
          best_loss = mean;
          best[static_cast<size_t>(k)] = chosen[static_cast<size_t>(ci)];
        }
      }
    }
  }

  PhaseResult result;
  result.phi = samples.front().phi;
  result.predictions.resize(plan.n, 2);
  result.folds.resize(kFolds);
  result.selected.resize(kFolds);
  parallel_for(kFolds, options.jobs, [&](int k) {
    model::ModelSpec spec = proto;
    spec.hp = space[static_cast<size_t>(best[static_cast<size_t>(k)])];
    auto idx = plan.outer_train(k);
    Rng rng(derive_seed(options.seed, {2, static_cast<std::uint64_t>(k)}));
    std::shuffle(idx.begin(), idx.end(), rng);
    const size_t n_val = std::max<size_t>(1, idx.size() / kFolds);
    const std::vector<int> val_idx(idx.end() - static_cast<std::ptrdiff_t>(n_val), idx.end());
    const std::vector<int> train_idx(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(n_val));
    const auto cfg = seeded(options.train, derive_seed(options.seed, {3, static_cast<std::uint64_t>(k)}));
    const auto m = model::fit_model(spec, gather(samples, train_idx), gather(samples, val_idx), cfg);
    const auto test_idx = plan.outer_test(k);
    const auto test = gather(samples, test_idx);
    const Eigen::MatrixXd pred = m.predict(test);
    for (size_t i = 0; i < test_idx.size(); ++i) result.predictions.row(test_idx[i]) = pred.row(static_cast<Eigen::Index>(i));
    result.folds[static_cast<size_t>(k)] = metrics(pred, targets_of(test));
    result.selected[static_cast<size_t>(k)] = spec.hp;
  });
  result.pooled = metrics(result.predictions, targets_of(samples));
  return result;
}

EvalCurve assemble_curve(std::span<const PhaseResult> results, const LowessOptions& options) {
  EvalCurve c;
  for (const auto& r : results) {
    c.phases.push_back(r.phi);
    c.rmse_pooled.push_back(r.pooled.rmse_pooled);
    for (int a = 0; a < 2; ++a) {
      c.r2[a].push_back(r.pooled.r2[a]);
      c.rmse[a].push_back(r.pooled.rmse[a]);
      std::vector<double> folds;
      for (const auto& f : r.folds) folds.push_back(f.r2[a]);
      c.fold_r2[a].push_back(std::move(folds));
    }
  }
  if (c.phases.size() >= 5) {
    for (int a = 0; a < 2; ++a) c.smoothed[a] = lowess(c.phases, c.r2[a], options).values;
  }
  return c;
}

ModelScore model_score(const std::map<std::string, std::vector<double>>& rmse, double critical) {
  std::vector<double> grid;
  for (int i = 0; i < kPhaseCount; ++i) grid.push_back(phase_value(i));
  const int ci = phase_index(critical);
  if (!rmse.empty() && rmse.begin()->second.size() <= static_cast<size_t>(ci)) {
    fail(ErrorKind::GridMismatch, "RMSE curves shorter than the critical phase");
  }
  if (!rmse.empty()) grid.resize(rmse.begin()->second.size());
  return model_score(rmse, grid, critical);
}

ModelScore model_score(const std::map<std::string, std::vector<double>>& rmse, std::span<const double> phases,
                       double critical) {
  if (rmse.empty()) fail(ErrorKind::TooFewPoints, "no models to score");
  ModelScore s;
  for (const auto& [name, curve] : rmse) {
    if (curve.size() != phases.size()) fail(ErrorKind::GridMismatch, "RMSE curves differ from the phase grid");
    s.models.push_back(name);
  }
  const int ci = phase_index(critical);
  size_t count = 0;
  bool on_grid = false;
  for (double phi : phases) {
    if (phase_index(phi) <= ci) ++count;
    on_grid = on_grid || phase_index(phi) == ci;
  }
  if (!on_grid) fail(ErrorKind::GridMismatch, "critical phase is not on the curve grid");
  s.critical = phase_value(ci);
  s.score.assign(s.models.size(), 0.0);
  for (size_t i = 0; i < phases.size(); ++i) {
    if (phase_index(phases[i]) > ci) continue;
    s.psi.push_back(phases[i]);
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& [name, curve] : rmse) lo = std::min(lo, curve[i]);
    size_t m = 0;
    for (const auto& [name, curve] : rmse) {
      const double r = curve[i];
      double ratio;
      if (lo <= 0.0) {
        s.zero_rmse = true;
        ratio = r <= 0.0 ? 1.0 : 0.0;
      } else {
        ratio = lo / r;
      }
      s.score[m++] += ratio / static_cast<double>(count);
    }
  }
  const double top = *std::max_element(s.score.begin(), s.score.end());
  for (double v : s.score) s.normalized.push_back(v / top);
  return s;
}

Smoothed lowess(std::span<const double> x, std::span<const double> y, const LowessOptions& options) {
  const int n = static_cast<int>(x.size());
  if (static_cast<int>(y.size()) != n) fail(ErrorKind::ShapeMismatch, "lowess x and y differ in length");
  if (n < 5) fail(ErrorKind::TooFewPoints, "lowess needs >= 5 points");
  if (!(options.fraction > 0.0 && options.fraction <= 1.0)) fail(ErrorKind::ConfigInvalid, "lowess fraction");
  const int k = std::clamp(static_cast<int>(options.fraction * n + 1e-10), 2, n);
  std::vector<double> robust(static_cast<size_t>(n), 1.0), fit(static_cast<size_t>(n), 0.0);
  for (int pass = 0; pass <= options.iterations; ++pass) {
    int left = 0;
    for (int i = 0; i < n; ++i) {
      while (left + k < n && x[i] - x[left] > x[left + k] - x[i]) ++left;
      const double h = std::max(x[i] - x[left], x[left + k - 1] - x[i]);
      double sw = 0.0, sx = 0.0, sy = 0.0;
      std::vector<double> w(static_cast<size_t>(n), 0.0);
      for (int j = 0; j < n; ++j) {
        const double r = std::abs(x[j] - x[i]);
        if (h > 0.0 && r >= 0.999 * h) continue;
        const double u = h > 0.0 ? r / h : 0.0;
        const double t = 1.0 - u * u * u;
        w[j] = t * t * t * robust[j];
        sw += w[j];
        sx += w[j] * x[j];
        sy += w[j] * y[j];
      }
      if (sw <= 0.0) {
        fit[i] = y[i];
        continue;
      }
      const double xm = sx / sw, ym = sy / sw;
      double sxx = 0.0, sxy = 0.0;
      for (int j = 0; j < n; ++j) {
        sxx += w[j] * (x[j] - xm) * (x[j] - xm);
        sxy += w[j] * (x[j] - xm) * (y[j] - ym);
      }
      const double range = x[n - 1] - x[0];
      fit[i] = sxx > 1e-12 * range * range * sw ? ym + sxy / sxx * (x[i] - xm) : ym;
    }
    if (pass == options.iterations) break;
    std::vector<double> res(static_cast<size_t>(n));
    double scale = 0.0;
    for (int i = 0; i < n; ++i) {
      res[i] = std::abs(y[i] - fit[i]);
      scale = std::max(scale, std::abs(y[i]));
    }
    std::vector<double> sorted = res;
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    double med = sorted[n / 2];
    if (n % 2 == 0) med = 0.5 * (med + *std::max_element(sorted.begin(), sorted.begin() + n / 2));
    if (med <= 1e-12 * std::max(scale, 1.0)) break;
    for (int i = 0; i < n; ++i) {
      const double u = res[i] / (6.0 * med);
      robust[i] = u < 1.0 ? (1.0 - u * u) * (1.0 - u * u) : 0.0;
    }
  }
  Smoothed s;
  s.values = fit;
  for (int i = 0; i < n; ++i) s.residual_bound = std::max(s.residual_bound, std::abs(y[i] - fit[i]));
  return s;
}

Smoothed smooth_curve(std::span<const double> raw, const LowessOptions& options) {
  std::vector<double> x;
  for (size_t i = 0; i < raw.size(); ++i) x.push_back(static_cast<double>(i) / kPhasesPerCycle);
  return lowess(x, raw, options);
}

NaturalCubicSpline::NaturalCubicSpline(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)), m_(x_.size(), 0.0) {
  const size_t n = x_.size();
  if (n != y_.size()) fail(ErrorKind::ShapeMismatch, "spline x and y differ in length");
  if (n < 2) fail(ErrorKind::TooFewPoints, "spline needs >= 2 knots");
  if (n == 2) return;
  // Tridiagonal system for interior second derivatives (Thomas algorithm).
  std::vector<double> a(n, 0.0), b(n, 1.0), c(n, 0.0), d(n, 0.0);
  for (size_t i = 1; i + 1 < n; ++i) {
    const double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
    a[i] = h0;
    b[i] = 2.0 * (h0 + h1);
    c[i] = h1;
    d[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
  }
  for (size_t i = 1; i < n; ++i) {
    const double w = a[i] / b[i - 1];
    b[i] -= w * c[i - 1];
    d[i] -= w * d[i - 1];
  }
  m_[n - 1] = d[n - 1] / b[n - 1];
  for (size_t i = n - 1; i-- > 0;) m_[i] = (d[i] - c[i] * m_[i + 1]) / b[i];
}

double NaturalCubicSpline::operator()(double t) const {
  const size_t n = x_.size();
  size_t i = static_cast<size_t>(std::upper_bound(x_.begin(), x_.end(), t) - x_.begin());
  i = std::clamp<size_t>(i, 1, n - 1) - 1;
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - t) / h, b = (t - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

double critical_phase(std::span<const double> best, std::span<const double> baseline) {
  std::vector<double> grid;
  for (size_t i = 0; i < best.size(); ++i) grid.push_back(phase_value(static_cast<int>(i)));
  return critical_phase(grid, best, baseline);
}

double critical_phase(std::span<const double> phases, std::span<const double> best,
                      std::span<const double> baseline) {
  if (best.size() != baseline.size() || best.empty() || phases.size() != best.size()) {
    fail(ErrorKind::GridMismatch, "curves differ in length");
  }
  size_t arg = 0;
  double top = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < best.size(); ++i) {
    const double gap = baseline[i] > 0.0 ? (baseline[i] - best[i]) / baseline[i] : 0.0;
    if (gap > top) {
      top = gap;
      arg = i;
    }
  }
  return phases[arg];
}

std::string_view score_band(double normalized) {
  if (normalized >= 0.98) return "dark_green";
  if (normalized >= 0.95) return "light_green";
  if (normalized >= 0.90) return "orange";
  return "red";
}

}  // namespace gaitscale::cv
