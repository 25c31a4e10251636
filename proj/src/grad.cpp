#include "gaitscale/grad.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "gaitscale/error.hpp"

namespace gaitscale::grad {

namespace {

using Backprop = std::function<void(Node&)>;

Var make_leaf(Matrix value, bool needs_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->needs_grad = needs_grad;
  return Var(std::move(n));
}

// Builds an interior node. The backprop closure is dropped when no input
// needs gradient, so constant subgraphs cost nothing on the way back.
Var make_op(Matrix value, std::initializer_list<Var> inputs, Backprop fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.needs_grad()) n->needs_grad = true;
  }
  if (n->needs_grad) {
    n->inputs.reserve(inputs.size());
    for (const auto& in : inputs) n->inputs.push_back(in.shared());
    n->backprop = std::move(fn);
  }
  return Var(std::move(n));
}

Var make_op_list(Matrix value, const std::vector<Var>& inputs, Backprop fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.needs_grad()) n->needs_grad = true;
  }
  if (n->needs_grad) {
    n->inputs.reserve(inputs.size());
    for (const auto& in : inputs) n->inputs.push_back(in.shared());
    n->backprop = std::move(fn);
  }
  return Var(std::move(n));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::ShapeMismatch,
         std::string(op) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
             " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

void require_layout(const Var& x, int batch, int steps, const char* op) {
  if (batch < 1 || steps < 1 || x.rows() != static_cast<Eigen::Index>(batch) * steps) {
    fail(ErrorKind::ShapeMismatch, std::string(op) + ": rows " + std::to_string(x.rows()) +
                                       " != batch*steps " + std::to_string(batch * steps));
  }
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var custom_op(Matrix value, const std::vector<Var>& inputs, std::function<void(Node&)> backprop) {
  return make_op_list(std::move(value), inputs, std::move(backprop));
}

Var parameter(Matrix value) { return make_leaf(std::move(value), true); }
Var constant(Matrix value) { return make_leaf(std::move(value), false); }

void backward(const Var& output) {
  if (output.rows() != 1 || output.cols() != 1) {
    fail(ErrorKind::ShapeMismatch, "backward expects a 1x1 output");
  }
  if (!output.needs_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(output.node(), 0);
  seen.insert(output.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->needs_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  output.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad.size() != 0) n->backprop(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorKind::ShapeMismatch, "matmul: inner dimensions " + std::to_string(a.cols()) +
                                       " vs " + std::to_string(b.rows()));
  }
  Matrix out = a.value() * b.value();
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node* a = self.inputs[0].get();
    Node* b = self.inputs[1].get();
    if (a->needs_grad) a->accumulate_expr(self.grad * b->value.transpose());
    if (b->needs_grad) b->accumulate_expr(a->value.transpose() * self.grad);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](Node& self) {
    for (auto& in : self.inputs)
      if (in->needs_grad) in->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](Node& self) {
    if (self.inputs[0]->needs_grad) self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->needs_grad) self.inputs[1]->accumulate_expr(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    Node* a = self.inputs[0].get();
    Node* b = self.inputs[1].get();
    if (a->needs_grad) a->accumulate_expr(self.grad.cwiseProduct(b->value));
    if (b->needs_grad) b->accumulate_expr(self.grad.cwiseProduct(a->value));
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& self) {
    self.inputs[0]->accumulate_expr(self.grad * s);
  });
}

Var one_minus(const Var& a) {
  return make_op((1.0 - a.value().array()).matrix(), {a}, [](Node& self) {
    self.inputs[0]->accumulate_expr(-self.grad);
  });
}

Var add_bias(const Var& a, const Var& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    fail(ErrorKind::ShapeMismatch, "add_bias: bias must be 1x" + std::to_string(a.cols()));
  }
  Matrix out = a.value().rowwise() + bias.value().row(0);
  return make_op(std::move(out), {a, bias}, [](Node& self) {
    if (self.inputs[0]->needs_grad) self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->needs_grad) self.inputs[1]->accumulate_expr(self.grad.colwise().sum());
  });
}

Var sigmoid(const Var& a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make_op(std::move(out), {a}, [](Node& self) {
    const auto& y = self.value.array();
    self.inputs[0]->accumulate_expr((self.grad.array() * y * (1.0 - y)).matrix());
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  return make_op(std::move(out), {a}, [](Node& self) {
    const auto& y = self.value.array();
    self.inputs[0]->accumulate_expr((self.grad.array() * (1.0 - y * y)).matrix());
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make_op(std::move(out), {a}, [](Node& self) {
    self.inputs[0]->accumulate_expr(
        (self.value.array() > 0.0).select(self.grad.array(), 0.0).matrix());
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    fail(ErrorKind::ShapeMismatch, "slice_cols out of range");
  }
  Matrix out = a.value().middleCols(start, count);
  return make_op(std::move(out), {a}, [start, count](Node& self) {
    Node* in = self.inputs[0].get();
    if (in->grad.size() == 0) in->grad = Matrix::Zero(in->value.rows(), in->value.cols());
    in->grad.middleCols(start, count) += self.grad;
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorKind::ShapeMismatch, "concat_cols of nothing");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) fail(ErrorKind::ShapeMismatch, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return make_op_list(std::move(out), ins, [](Node& self) {
    Eigen::Index c = 0;
    for (auto& in : self.inputs) {
      const Eigen::Index w = in->value.cols();
      if (in->needs_grad) in->accumulate_expr(self.grad.middleCols(c, w));
      c += w;
    }
  });
}

Var time_step(const Var& x, int batch, int steps, int t) {
  require_layout(x, batch, steps, "time_step");
  if (t < 0 || t >= steps) fail(ErrorKind::ShapeMismatch, "time_step: t out of range");
  Matrix out(batch, x.cols());
  for (int b = 0; b < batch; ++b) out.row(b) = x.value().row(b * steps + t);
  return make_op(std::move(out), {x}, [batch, steps, t](Node& self) {
    Node* in = self.inputs[0].get();
    if (in->grad.size() == 0) in->grad = Matrix::Zero(in->value.rows(), in->value.cols());
    for (int b = 0; b < batch; ++b) in->grad.row(b * steps + t) += self.grad.row(b);
  });
}

Var stack_time(std::span<const Var> steps) {
  if (steps.empty()) fail(ErrorKind::ShapeMismatch, "stack_time of nothing");
  const int T = static_cast<int>(steps.size());
  const Eigen::Index B = steps[0].rows();
  const Eigen::Index F = steps[0].cols();
  Matrix out(B * T, F);
  for (int t = 0; t < T; ++t) {
    if (steps[t].rows() != B || steps[t].cols() != F) {
      fail(ErrorKind::ShapeMismatch, "stack_time: step shapes differ");
    }
    for (Eigen::Index b = 0; b < B; ++b) out.row(b * T + t) = steps[t].value().row(b);
  }
  std::vector<Var> ins(steps.begin(), steps.end());
  return make_op_list(std::move(out), ins, [T, B](Node& self) {
    for (int t = 0; t < T; ++t) {
      Node* in = self.inputs[t].get();
      if (!in->needs_grad) continue;
      Matrix g(B, self.grad.cols());
      for (Eigen::Index b = 0; b < B; ++b) g.row(b) = self.grad.row(b * T + t);
      in->accumulate(g);
    }
  });
}

Var repeat_time(const Var& x, int steps) {
  const Eigen::Index B = x.rows();
  Matrix out(B * steps, x.cols());
  for (Eigen::Index b = 0; b < B; ++b)
    for (int t = 0; t < steps; ++t) out.row(b * steps + t) = x.value().row(b);
  return make_op(std::move(out), {x}, [B, steps](Node& self) {
    Matrix g = Matrix::Zero(B, self.grad.cols());
    for (Eigen::Index b = 0; b < B; ++b)
      for (int t = 0; t < steps; ++t) g.row(b) += self.grad.row(b * steps + t);
    self.inputs[0]->accumulate(g);
  });
}

Var mean_time(const Var& x, int batch, int steps) {
  require_layout(x, batch, steps, "mean_time");
  Matrix out = Matrix::Zero(batch, x.cols());
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < steps; ++t) out.row(b) += x.value().row(b * steps + t);
  out /= steps;
  return make_op(std::move(out), {x}, [batch, steps](Node& self) {
    Matrix g(static_cast<Eigen::Index>(batch) * steps, self.grad.cols());
    for (int b = 0; b < batch; ++b)
      for (int t = 0; t < steps; ++t) g.row(b * steps + t) = self.grad.row(b) / steps;
    self.inputs[0]->accumulate(g);
  });
}

Var append_time(const Var& x, const Var& token, int batch, int steps) {
  require_layout(x, batch, steps, "append_time");
  if (token.rows() != batch || token.cols() != x.cols()) {
    fail(ErrorKind::ShapeMismatch, "append_time: token must be batch x features");
  }
  const int T1 = steps + 1;
  Matrix out(static_cast<Eigen::Index>(batch) * T1, x.cols());
  for (int b = 0; b < batch; ++b) {
    out.middleRows(static_cast<Eigen::Index>(b) * T1, steps) =
        x.value().middleRows(static_cast<Eigen::Index>(b) * steps, steps);
    out.row(static_cast<Eigen::Index>(b) * T1 + steps) = token.value().row(b);
  }
  return make_op(std::move(out), {x, token}, [batch, steps, T1](Node& self) {
    Node* xn = self.inputs[0].get();
    Node* tn = self.inputs[1].get();
    if (xn->needs_grad) {
      Matrix g(static_cast<Eigen::Index>(batch) * steps, self.grad.cols());
      for (int b = 0; b < batch; ++b)
        g.middleRows(static_cast<Eigen::Index>(b) * steps, steps) =
            self.grad.middleRows(static_cast<Eigen::Index>(b) * T1, steps);
      xn->accumulate(g);
    }
    if (tn->needs_grad) {
      Matrix g(batch, self.grad.cols());
      for (int b = 0; b < batch; ++b) g.row(b) = self.grad.row(static_cast<Eigen::Index>(b) * T1 + steps);
      tn->accumulate(g);
    }
  });
}

Var select_time(const Var& x, int batch, int steps, std::span<const int> times) {
  require_layout(x, batch, steps, "select_time");
  const int S = static_cast<int>(times.size());
  std::vector<int> idx(times.begin(), times.end());
  for (int t : idx)
    if (t < 0 || t >= steps) fail(ErrorKind::ShapeMismatch, "select_time: index out of range");
  Matrix out(static_cast<Eigen::Index>(batch) * S, x.cols());
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < S; ++j) out.row(b * S + j) = x.value().row(b * steps + idx[j]);
  return make_op(std::move(out), {x}, [batch, steps, S, idx](Node& self) {
    Node* in = self.inputs[0].get();
    if (in->grad.size() == 0) in->grad = Matrix::Zero(in->value.rows(), in->value.cols());
    for (int b = 0; b < batch; ++b)
      for (int j = 0; j < S; ++j) in->grad.row(b * steps + idx[j]) += self.grad.row(b * S + j);
  });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
  std::vector<int> idx(ids.begin(), ids.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), table.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= table.rows()) {
      fail(ErrorKind::UnknownTrial, "row id " + std::to_string(idx[i]) + " outside table of " +
                                        std::to_string(table.rows()));
    }
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(idx[i]);
  }
  return make_op(std::move(out), {table}, [idx](Node& self) {
    Node* in = self.inputs[0].get();
    if (in->grad.size() == 0) in->grad = Matrix::Zero(in->value.rows(), in->value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
      in->grad.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
  });
}

std::vector<int> strided_times(int steps, int stride) {
  if (stride < 1) fail(ErrorKind::ShapeMismatch, "stride must be >= 1");
  const int count = (steps + stride - 1) / stride;
  std::vector<int> out(count);
  for (int j = 0; j < count; ++j) out[j] = steps - 1 - (count - 1 - j) * stride;
  return out;
}

Var causal_conv1d(const Var& x, const Var& weight, const Var& bias, int batch, int steps,
                  int dilation, int stride) {
  require_layout(x, batch, steps, "causal_conv1d");
  const Eigen::Index fin = x.cols();
  if (dilation < 1) fail(ErrorKind::ShapeMismatch, "dilation must be >= 1");
  if (weight.rows() % fin != 0 || weight.rows() == 0) {
    fail(ErrorKind::ShapeMismatch, "causal_conv1d: weight rows must be K*Fin");
  }
  const int K = static_cast<int>(weight.rows() / fin);
  if (bias.rows() != 1 || bias.cols() != weight.cols()) {
    fail(ErrorKind::ShapeMismatch, "causal_conv1d: bias must be 1 x Fout");
  }
  const std::vector<int> times = strided_times(steps, stride);
  const int S = static_cast<int>(times.size());

  // im2col: one row per (sample, output step), K blocks of Fin columns.
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(batch) * S, K * fin);
  for (int b = 0; b < batch; ++b) {
    for (int j = 0; j < S; ++j) {
      for (int k = 0; k < K; ++k) {
        const int src = times[j] - (K - 1 - k) * dilation;
        if (src >= 0) cols.block(b * S + j, k * fin, 1, fin) = x.value().row(b * steps + src);
      }
    }
  }
  Matrix out = cols * weight.value();
  out.rowwise() += bias.value().row(0);

  return make_op(std::move(out), {x, weight, bias},
                 [batch, steps, dilation, times, S, K, fin, cols = std::move(cols)](Node& self) {
                   Node* xn = self.inputs[0].get();
                   Node* wn = self.inputs[1].get();
                   Node* bn = self.inputs[2].get();
                   if (wn->needs_grad) wn->accumulate_expr(cols.transpose() * self.grad);
                   if (bn->needs_grad) bn->accumulate_expr(self.grad.colwise().sum());
                   if (xn->needs_grad) {
                     Matrix dcols = self.grad * wn->value.transpose();
                     if (xn->grad.size() == 0) xn->grad = Matrix::Zero(xn->value.rows(), fin);
                     for (int b = 0; b < batch; ++b)
                       for (int j = 0; j < S; ++j)
                         for (int k = 0; k < K; ++k) {
                           const int src = times[j] - (K - 1 - k) * dilation;
                           if (src >= 0)
                             xn->grad.row(b * steps + src) += dcols.block(b * S + j, k * fin, 1, fin);
                         }
                   }
                 });
}

Matrix softmax_rows(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double mx = scores.row(r).maxCoeff();
    out.row(r) = (scores.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Var attention(const Var& q, const Var& k, const Var& v, int batch, int steps, int heads) {
  require_layout(q, batch, steps, "attention");
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  const Eigen::Index d = q.cols();
  if (heads < 1 || d % heads != 0) {
    fail(ErrorKind::DimNotDivisible,
         "model dim " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  }
  const Eigen::Index dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix out(q.rows(), d);
  std::vector<Matrix> probs(static_cast<std::size_t>(batch) * heads);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(b) * steps;
    for (int h = 0; h < heads; ++h) {
      const auto Q = q.value().block(r0, h * dh, steps, dh);
      const auto K = k.value().block(r0, h * dh, steps, dh);
      const auto V = v.value().block(r0, h * dh, steps, dh);
      Matrix A = softmax_rows((Q * K.transpose()) * inv);
      out.block(r0, h * dh, steps, dh) = A * V;
      probs[static_cast<std::size_t>(b) * heads + h] = std::move(A);
    }
  }
  return make_op(std::move(out), {q, k, v},
                 [batch, steps, heads, dh, inv, probs = std::move(probs)](Node& self) {
                   Node* qn = self.inputs[0].get();
                   Node* kn = self.inputs[1].get();
                   Node* vn = self.inputs[2].get();
                   Matrix dq = Matrix::Zero(qn->value.rows(), qn->value.cols());
                   Matrix dk = Matrix::Zero(dq.rows(), dq.cols());
                   Matrix dv = Matrix::Zero(dq.rows(), dq.cols());
                   for (int b = 0; b < batch; ++b) {
                     const Eigen::Index r0 = static_cast<Eigen::Index>(b) * steps;
                     for (int h = 0; h < heads; ++h) {
                       const Matrix& A = probs[static_cast<std::size_t>(b) * heads + h];
                       const auto Q = qn->value.block(r0, h * dh, steps, dh);
                       const auto K = kn->value.block(r0, h * dh, steps, dh);
                       const auto V = vn->value.block(r0, h * dh, steps, dh);
                       const auto dO = self.grad.block(r0, h * dh, steps, dh);
                       dv.block(r0, h * dh, steps, dh) = A.transpose() * dO;
                       Matrix dA = dO * V.transpose();
                       Eigen::VectorXd rowdot = (dA.cwiseProduct(A)).rowwise().sum();
                       Matrix dS = A.cwiseProduct(dA.colwise() - rowdot) * inv;
                       dq.block(r0, h * dh, steps, dh) = dS * K;
                       dk.block(r0, h * dh, steps, dh) = dS.transpose() * Q;
                     }
                   }
                   if (qn->needs_grad) qn->accumulate(dq);
                   if (kn->needs_grad) kn->accumulate(dk);
                   if (vn->needs_grad) vn->accumulate(dv);
                 });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Eigen::Index F = x.cols();
  if (gain.rows() != 1 || gain.cols() != F || bias.rows() != 1 || bias.cols() != F) {
    fail(ErrorKind::ShapeMismatch, "layer_norm: gain/bias must be 1 x features");
  }
  const Eigen::VectorXd mean = x.value().rowwise().mean();
  Matrix xhat = x.value().colwise() - mean;
  const Eigen::VectorXd inv_std =
      ((xhat.array().square().rowwise().sum() / static_cast<double>(F)) + eps).rsqrt().matrix();
  xhat = inv_std.asDiagonal() * xhat;
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return make_op(std::move(out), {x, gain, bias},
                 [xhat = std::move(xhat), inv_std](Node& self) {
                   Node* xn = self.inputs[0].get();
                   Node* gn = self.inputs[1].get();
                   Node* bn = self.inputs[2].get();
                   if (gn->needs_grad) gn->accumulate_expr(self.grad.cwiseProduct(xhat).colwise().sum());
                   if (bn->needs_grad) bn->accumulate_expr(self.grad.colwise().sum());
                   if (xn->needs_grad) {
                     Matrix dxhat = self.grad.array().rowwise() * gn->value.row(0).array();
                     const Eigen::VectorXd m1 = dxhat.rowwise().mean();
                     const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
                     Matrix dx = dxhat.colwise() - m1;
                     dx -= (xhat.array().colwise() * m2.array()).matrix();
                     dx = inv_std.asDiagonal() * dx;
                     xn->accumulate(dx);
                   }
                 });
}

Var dropout(const Var& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorKind::InvalidRate, "dropout rate must be in [0, 1)");
  if (mode == Mode::Eval || rate == 0.0) return x;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = uni(rng) < rate ? 0.0 : keep_scale;
  Matrix out = x.value().cwiseProduct(mask);
  return make_op(std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    self.inputs[0]->accumulate_expr(self.grad.cwiseProduct(mask));
  });
}

Var mse_loss(const Var& pred, const Var& target) {
  require_same_shape(pred, target, "mse_loss");
  const double n = static_cast<double>(pred.value().size());
  Matrix diff = pred.value() - target.value();
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return make_op(std::move(out), {pred, target}, [n, diff = std::move(diff)](Node& self) {
    const double g = self.grad(0, 0) * 2.0 / n;
    if (self.inputs[0]->needs_grad) self.inputs[0]->accumulate_expr(diff * g);
    if (self.inputs[1]->needs_grad) self.inputs[1]->accumulate_expr(diff * -g);
  });
}

Var weighted_sum(const Var& x, const Matrix& weights) {
  if (weights.rows() != x.rows() || weights.cols() != x.cols()) {
    fail(ErrorKind::ShapeMismatch, "weighted_sum: weight shape differs");
  }
  Matrix out(1, 1);
  out(0, 0) = x.value().cwiseProduct(weights).sum();
  return make_op(std::move(out), {x}, [weights](Node& self) {
    self.inputs[0]->accumulate_expr(weights * self.grad(0, 0));
  });
}

Matrix positional_encoding(int max_positions, int dim) {
  if (dim % 2 != 0) fail(ErrorKind::OddDim, "positional encoding needs an even dimension");
  Matrix pe(max_positions, dim);
  for (int pos = 0; pos < max_positions; ++pos) {
    for (int i = 0; i < dim / 2; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * i / dim);
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

}  // namespace gaitscale::grad
