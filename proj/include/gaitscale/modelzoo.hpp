#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gaitscale/sampling.hpp"
#include "gaitscale/train.hpp"

namespace gaitscale::model {

enum class Arch { LI, LH, LI2, LH2, FCNN, GRU, LSTM, TCN, Transformer };

inline constexpr Arch kAllArchs[] = {Arch::LI,   Arch::LH,   Arch::LI2, Arch::LH2,        Arch::FCNN,
                                     Arch::GRU,  Arch::LSTM, Arch::TCN, Arch::Transformer};

std::string_view to_string(Arch arch);
Arch parse_arch(std::string_view name);
bool is_linear(Arch arch);

struct Hyperparams {
  int hidden_dim = 16;
  int decay = 2;
  double dropout = 0.0;
  int kernel = 3;
  int dilation = 1;
  int num_layers = 2;
  int num_heads = 2;
  int ff_dim = 32;
  double lambda = 1.0;  // ridge penalty, LI2/LH2

  bool operator==(const Hyperparams&) const = default;
  /// "key=value" pairs of the fields the architecture uses, comma separated.
  std::string describe(Arch arch) const;
};

struct ModelSpec {
  Arch arch = Arch::LI;
  Hyperparams hp;
  int steps = 0;     // t
  int features = 0;  // m
  int trials = 0;    // T

  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

/// Length of the trial embedding vector: ceil(sqrt(T)).
int embedding_dim(int trials);

/// FCNN hidden widths for a given input width and decay factor.
std::vector<int> fcnn_widths(int input_width, int decay);

/// Untrained network for a nonlinear architecture.
std::unique_ptr<grad::Network> build_network(const ModelSpec& spec, Rng& rng);

struct LinearCoefficients {
  Eigen::MatrixXd weights;  // p x 2
  Eigen::RowVector2d intercept;
};

/// Design row for a linear variant: last row of S (LI, LI2) or S flattened row-major (LH, LH2).
Eigen::RowVectorXd linear_design(Arch arch, const Eigen::MatrixXd& S);

/// Per-trial least squares (minimum norm) or ridge with unpenalized intercept.
LinearCoefficients fit_linear(std::span<const Sample> samples, Arch arch, double lambda);

struct TrainedModel {
  ModelSpec spec;
  Standardizer features;
  TargetScaler targets;
  std::shared_ptr<const grad::Network> network;  // nonlinear only
  std::map<std::pair<int, int>, LinearCoefficients> linear;  // linear only, keyed by (trial, flag)
  grad::TrainResult training;

  /// n x 2 predictions (ML, AP) in metres for raw, unstandardized samples.
  Eigen::MatrixXd predict(std::span<const Sample> samples) const;
};

/// Fits features/targets normalization on `train`, then the model. Nonlinear
/// models early-stop on `val`; linear models fit per (trial, L/R flag) on
/// train and val together.
TrainedModel fit_model(const ModelSpec& spec, std::span<const Sample> train, std::span<const Sample> val,
                       const grad::TrainConfig& config);

}  // namespace gaitscale::model
