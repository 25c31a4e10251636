#include "gaitscale/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gaitscale/error.hpp"

namespace gaitscale::grad {

Batch TensorDataset::make_batch(std::span<const int> indices) const {
  Batch b;
  b.batch = static_cast<int>(indices.size());
  b.steps = steps;
  b.x.resize(static_cast<Eigen::Index>(b.batch) * steps, x.cols());
  b.flags.resize(b.batch, 1);
  b.y.resize(b.batch, y.cols());
  b.trials.resize(b.batch);
  for (int i = 0; i < b.batch; ++i) {
    const int s = indices[i];
    if (s < 0 || s >= size()) fail(ErrorKind::ShapeMismatch, "batch index out of range");
    b.x.middleRows(static_cast<Eigen::Index>(i) * steps, steps) =
        x.middleRows(static_cast<Eigen::Index>(s) * steps, steps);
    b.flags(i, 0) = flags[s];
    b.y.row(i) = y.row(s);
    b.trials[i] = trials[s];
  }
  return b;
}

TensorDataset TensorDataset::subset(std::span<const int> indices) const {
  Batch b = make_batch(indices);
  TensorDataset out;
  out.x = std::move(b.x);
  out.trials = std::move(b.trials);
  out.flags.assign(b.flags.data(), b.flags.data() + b.flags.size());
  out.y = std::move(b.y);
  out.steps = steps;
  return out;
}

Matrix predict_all(const Network& net, const TensorDataset& data, int chunk) {
  Matrix out(data.size(), 2);
  Rng unused(0);
  std::vector<int> idx;
  for (int start = 0; start < data.size(); start += chunk) {
    const int n = std::min(chunk, data.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    const Var pred = net.forward(data.make_batch(idx), Mode::Eval, unused);
    out.middleRows(start, n) = pred.value();
  }
  return out;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state) {
  if (params.size() != grads.size()) fail(ErrorKind::ShapeMismatch, "one gradient per parameter");
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) fail(ErrorKind::ShapeMismatch, "optimizer state size");
  for (size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i]->rows() || grads[i].cols() != params[i]->cols() ||
        state.m[i].rows() != params[i]->rows() || state.m[i].cols() != params[i]->cols()) {
      fail(ErrorKind::ShapeMismatch, "gradient shape differs from parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i].cwiseAbs2();
    params[i]->array() -= state.lr * (state.m[i].array() / c1) /
                          ((state.v[i].array() / c2).sqrt() + state.eps);
  }
}

void adam_step(ParamList& params, AdamState& state) {
  std::vector<Matrix*> ptrs;
  std::vector<Matrix> grads;
  ptrs.reserve(params.size());
  grads.reserve(params.size());
  for (NamedParam& p : params) {
    Matrix& value = p.var.mutable_value();
    ptrs.push_back(&value);
    if (p.var.grad().size() == 0) {
      grads.push_back(Matrix::Zero(value.rows(), value.cols()));
    } else {
      grads.push_back(p.var.grad());
    }
  }
  adam_step(ptrs, grads, state);
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) fail(ErrorKind::InvalidConfig, "patience must be >= 1");
}

bool EarlyStopping::update(int epoch, double val_loss) {
  if (best_epoch_ < 0 || val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = epoch;
    stale_ = 0;
    improved_ = true;
    return false;
  }
  improved_ = false;
  ++stale_;
  return stale_ >= patience_;
}

void TrainConfig::validate() const {
  if (patience < 1) fail(ErrorKind::InvalidConfig, "patience must be >= 1");
  if (batch_size < 1) fail(ErrorKind::InvalidConfig, "batch size must be >= 1");
  if (max_epochs < 1) fail(ErrorKind::InvalidConfig, "max epochs must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorKind::InvalidRate, "dropout must be in [0,1)");
}

namespace {

double mse_of(const Matrix& pred, const Matrix& y) {
  return (pred - y).squaredNorm() / static_cast<double>(y.size());
}

std::vector<Matrix> snapshot(const ParamList& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const NamedParam& p : params) out.push_back(p.var.value());
  return out;
}

}  // namespace

TrainResult train_loop(Network& net, const TensorDataset& train, const TensorDataset& val,
                       const TrainConfig& config) {
  config.validate();
  if (train.size() == 0 || val.size() == 0) fail(ErrorKind::InvalidConfig, "empty training split");
  net.dropout_rate = config.dropout;

  Rng rng(derive_seed(config.seed, {0x747261696eULL}));
  AdamState adam;
  EarlyStopping stopper(config.patience);
  TrainResult result;
  std::vector<Matrix> best = snapshot(net.params());
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sse = 0.0;
    for (int start = 0; start < train.size(); start += config.batch_size) {
      const int n = std::min(config.batch_size, train.size() - start);
      const Batch batch = train.make_batch(std::span<const int>(order).subspan(start, n));
      for (NamedParam& p : net.params()) p.var.zero_grad();
      const Var pred = net.forward(batch, Mode::Train, rng);
      const Var loss = mse_loss(pred, constant(batch.y));
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) {
        fail(ErrorKind::NonFiniteLoss,
             "training loss " + std::to_string(value) + " at epoch " + std::to_string(epoch));
      }
      sse += value * n;
      backward(loss);
      adam_step(net.params(), adam);
    }
    const double val_mse = mse_of(predict_all(net, val), val.y);
    if (!std::isfinite(val_mse)) {
      fail(ErrorKind::NonFiniteLoss, "validation loss diverged at epoch " + std::to_string(epoch));
    }
    result.history.push_back({epoch, sse / train.size(), val_mse});
    result.epochs_run = epoch + 1;
    const bool stop = stopper.update(epoch, val_mse);
    if (stopper.improved()) best = snapshot(net.params());
    if (stop) break;
  }
  for (size_t i = 0; i < best.size(); ++i) net.params()[i].var.mutable_value() = best[i];
  for (NamedParam& p : net.params()) p.var.zero_grad();
  result.best_epoch = stopper.best_epoch();
  result.best_val_mse = stopper.best_loss();
  return result;
}

std::string history_csv(const TrainResult& result) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_mse,val_mse\n";
  for (const EpochRecord& r : result.history) {
    os << r.epoch << ',' << r.train_mse << ',' << r.val_mse << '\n';
  }
  return os.str();
}

}  // namespace gaitscale::grad
