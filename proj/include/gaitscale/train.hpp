#pragma once

#include <span>
#include <string>
#include <vector>

#include "gaitscale/layers.hpp"

namespace gaitscale::grad {

/// A mini-batch of windows. x is (batch*steps) x features, sample-major.
struct Batch {
  Matrix x;
  std::vector<int> trials;
  Matrix flags;  // batch x 1
  Matrix y;      // batch x 2
  int batch = 0;
  int steps = 0;
};

struct TensorDataset {
  Matrix x;  // (n*steps) x features
  std::vector<int> trials;
  std::vector<double> flags;
  Matrix y;  // n x 2
  int steps = 0;

  int size() const { return static_cast<int>(trials.size()); }
  int features() const { return static_cast<int>(x.cols()); }
  Batch make_batch(std::span<const int> indices) const;
  TensorDataset subset(std::span<const int> indices) const;
};

class Network {
 public:
  virtual ~Network() = default;
  /// Returns batch x 2 predictions.
  virtual Var forward(const Batch& batch, Mode mode, Rng& rng) const = 0;
  ParamList& params() { return params_; }
  const ParamList& params() const { return params_; }
  double dropout_rate = 0.0;

 protected:
  ParamList params_;
};

/// Predictions for a whole dataset in eval mode, processed in chunks.
Matrix predict_all(const Network& net, const TensorDataset& data, int chunk = 256);

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

/// One bias-corrected ADAM update applied in place.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state);
/// Same update over registered parameters, reading their accumulated gradients
/// (an empty gradient counts as zero).
void adam_step(ParamList& params, AdamState& state);

class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);
  /// Records one epoch; returns true when training should stop.
  bool update(int epoch, double val_loss);
  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  int patience_;
  int best_epoch_ = -1;
  int stale_ = 0;
  bool improved_ = false;
  double best_ = 0.0;
};

struct TrainConfig {
  int max_epochs = 1000;
  int patience = 50;
  int batch_size = 64;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch;
  double train_mse;
  double val_mse;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_mse = 0.0;
  int epochs_run = 0;
};

/// Mini-batch ADAM on MSE with early stopping. On return the network holds the
/// parameters of its best validation epoch.
TrainResult train_loop(Network& net, const TensorDataset& train, const TensorDataset& val,
                       const TrainConfig& config);

std::string history_csv(const TrainResult& result);

}  // namespace gaitscale::grad
