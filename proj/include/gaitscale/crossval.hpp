#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gaitscale/modelzoo.hpp"
#include "gaitscale/sampling.hpp"

namespace gaitscale::cv {

inline constexpr int kFolds = 5;

struct FoldPlan {
  int n = 0;
  std::uint64_t seed = 0;
  std::vector<int> outer;               // sample -> outer fold
  std::vector<std::vector<int>> inner;  // [outer fold][sample] -> inner fold, -1 for the outer test fold

  std::vector<int> outer_test(int k) const;
  std::vector<int> outer_train(int k) const;
  std::vector<int> inner_val(int k, int j) const;
  std::vector<int> inner_train(int k, int j) const;
};

/// Random permutation split into 5 near-equal folds (larger folds first), with
/// each outer-training set split again into 5 inner folds.
FoldPlan make_fold_plan(int n, std::uint64_t seed);

/// Hyperparameter lists for an architecture; linear models have a single
/// configuration carrying `base.lambda`.
std::vector<model::Hyperparams> hyperparam_space(model::Arch arch, const model::Hyperparams& base = {});

enum class SearchKind { Grid, Random };

struct SearchStrategy {
  SearchKind kind = SearchKind::Grid;
  int draws = 0;
};

SearchStrategy search_strategy(std::size_t space_size, int budget = 100);

/// Indices into the space to evaluate: all of them for grid search, otherwise
/// `budget` distinct draws (returned in ascending order).
std::vector<int> select_configs(std::size_t space_size, int budget, std::uint64_t seed);

struct CvOptions {
  grad::TrainConfig train;
  int budget = 100;
  bool tune = true;  // false: evaluate `base` only, no inner search
  int jobs = 1;
  std::uint64_t seed = 0;
};

struct AxisMetrics {
  std::array<double, 2> r2{};
  std::array<double, 2> rmse{};
  double rmse_pooled = 0.0;  // both axes pooled
};

/// Pooled R^2 = 1 - SSE/SST and RMSE per axis over all rows.
AxisMetrics metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

struct PhaseResult {
  double phi = 0.0;
  AxisMetrics pooled;
  std::vector<AxisMetrics> folds;            // one per outer fold
  std::vector<model::Hyperparams> selected;  // per outer fold
  Eigen::MatrixXd predictions;               // n x 2, outer-test predictions
};

/// Nested cross-validation for one architecture on samples at a single phase.
PhaseResult nested_cv_evaluate(std::span<const Sample> samples, model::Arch arch, const model::Hyperparams& base,
                               const FoldPlan& plan, const CvOptions& options);

struct EvalCurve {
  std::vector<double> phases;
  std::array<std::vector<double>, 2> r2;
  std::array<std::vector<double>, 2> rmse;
  std::vector<double> rmse_pooled;
  std::array<std::vector<std::vector<double>>, 2> fold_r2;  // [axis][phase][fold]
  std::array<std::vector<double>, 2> smoothed;

  bool operator==(const EvalCurve&) const = default;
};



struct ModelScore {
  std::vector<std::string> models;
  std::vector<double> score;
  std::vector<double> normalized;
  std::vector<double> psi;
  double critical = 0.0;
  bool zero_rmse = false;  // a perfect model was met; limit convention applied

  bool operator==(const ModelScore&) const = default;
};

/// s_m = mean over phi in {0, 0.05, ..., c} of min_m' RMSE / RMSE_m; s_m^n = s_m / max s.
ModelScore model_score(const std::map<std::string, std::vector<double>>& rmse, double critical);
/// Same over curves sampled at `phases`; psi is the grid points up to c.
ModelScore model_score(const std::map<std::string, std::vector<double>>& rmse, std::span<const double> phases,
                       double critical);

struct Smoothed {
  std::vector<double> values;   // LOWESS fit at the grid
  double residual_bound = 0.0;  // max |raw - fit|
};

struct LowessOptions {
  double fraction = 0.4;
  int iterations = 2;
};

/// Curve over the phases of `results`; smoothed when there are >= 5 phases.
EvalCurve assemble_curve(std::span<const PhaseResult> results, const LowessOptions& options = {});

Smoothed lowess(std::span<const double> x, std::span<const double> y, const LowessOptions& options = {});
/// LOWESS over the 21-point phase grid.
Smoothed smooth_curve(std::span<const double> raw, const LowessOptions& options = {});

class NaturalCubicSpline {
 public:
  NaturalCubicSpline(std::vector<double> x, std::vector<double> y);
  double operator()(double t) const;

 private:
  std::vector<double> x_, y_, m_;  // m_: second derivatives at knots
};

/// argmax of (baseline - best)/baseline, earliest on ties.
double critical_phase(std::span<const double> best, std::span<const double> baseline);
double critical_phase(std::span<const double> phases, std::span<const double> best,
                      std::span<const double> baseline);

/// Table colour band of a normalized score.
std::string_view score_band(double normalized);

}  // namespace gaitscale::cv
