#pragma once

// Minimal reverse-mode differentiation over dense matrices.
//
// Sequences are stored sample-major: a batch of B sequences of length T with
// F features is a (B*T) x F matrix whose row b*T + t holds sample b at time t.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "gaitscale/rng.hpp"

namespace gaitscale::grad {

using Matrix = Eigen::MatrixXd;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows back
  bool needs_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;

  void accumulate(const Matrix& g);
  template <typename Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool needs_grad() const { return node_->needs_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  void zero_grad() { node_->grad.resize(0, 0); }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Trainable leaf.
Var parameter(Matrix value);
/// Leaf that never receives gradient.
Var constant(Matrix value);

/// Interior node with a hand-written backward pass; `backprop` reads
/// self.grad and accumulates into self.inputs (same order as `inputs`).
Var custom_op(Matrix value, const std::vector<Var>& inputs, std::function<void(Node&)> backprop);

/// Runs reverse accumulation from a 1x1 output.
void backward(const Var& output);

// Elementwise and dense algebra.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var one_minus(const Var& a);
Var add_bias(const Var& a, const Var& bias);  // bias is 1 x cols
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);

// Sequence layout helpers.
Var time_step(const Var& x, int batch, int steps, int t);
Var stack_time(std::span<const Var> steps);
Var repeat_time(const Var& x, int steps);
Var mean_time(const Var& x, int batch, int steps);
Var append_time(const Var& x, const Var& token, int batch, int steps);
Var select_time(const Var& x, int batch, int steps, std::span<const int> times);
Var gather_rows(const Var& table, std::span<const int> ids);

/// Time indices kept by a stride-s causal downsample of a length-T sequence;
/// always keeps the final step, giving ceil(T/s) outputs.
std::vector<int> strided_times(int steps, int stride);

/// Causal 1-D convolution. weight is (K*Fin) x Fout, block k multiplying the
/// input at lag (K-1-k)*dilation. Output has ceil(T/stride) steps.
Var causal_conv1d(const Var& x, const Var& weight, const Var& bias, int batch, int steps,
                  int dilation, int stride);

/// Scaled dot-product attention over each sample's sequence, per head.
Var attention(const Var& q, const Var& k, const Var& v, int batch, int steps, int heads);

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

enum class Mode { Train, Eval };

/// Inverted dropout: survivors scaled by 1/(1-rate); identity in eval mode.
Var dropout(const Var& x, double rate, Mode mode, Rng& rng);

/// Mean over every entry of (pred - target)^2.
Var mse_loss(const Var& pred, const Var& target);
/// sum(x .* weights) with constant weights.
Var weighted_sum(const Var& x, const Matrix& weights);

/// Row-wise softmax (value only; attention has its own fused backward).
Matrix softmax_rows(const Matrix& scores);

/// Sinusoidal encoding, rows = positions.
Matrix positional_encoding(int max_positions, int dim);

}  // namespace gaitscale::grad
