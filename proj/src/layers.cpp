#include "gaitscale/layers.hpp"

#include <cmath>

#include "gaitscale/error.hpp"

namespace gaitscale::grad {

Var ParamRegistry::add(const std::string& name, Matrix init) {
  Var v = parameter(std::move(init));
  sink_->push_back({prefix_.empty() ? name : prefix_ + "." + name, v});
  return v;
}

ParamRegistry ParamRegistry::scoped(const std::string& name) const {
  return ParamRegistry(*sink_, prefix_.empty() ? name : prefix_ + "." + name);
}

Matrix uniform_init(int rows, int cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> uni(-bound, bound);
  Matrix m(rows, cols);
  // Fill in row-major order so the draw sequence is layout independent.
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = uni(rng);
  return m;
}

Matrix xavier_uniform(int fan_in, int fan_out, Rng& rng) {
  return uniform_init(fan_in, fan_out, std::sqrt(6.0 / (fan_in + fan_out)), rng);
}

Dense::Dense(ParamRegistry reg, int in, int out, Rng& rng)
    : weight(reg.add("weight", xavier_uniform(in, out, rng))),
      bias(reg.add("bias", Matrix::Zero(1, out))) {}

namespace {

void check_recurrent(const Var& h, const Var& recurrent, int gates) {
  if (recurrent.rows() != h.cols() || recurrent.cols() != gates * h.cols()) {
    fail(ErrorKind::ShapeMismatch, "hidden state width does not match recurrent weights");
  }
}


Var gru_step_split(const Var& x_proj, const Var& h, const Var& u_zr, const Var& u_h) {
  const Eigen::Index H = h.cols();
  const Var gates = sigmoid(add(slice_cols(x_proj, 0, 2 * H), matmul(h, u_zr)));
  const Var z = slice_cols(gates, 0, H);
  const Var r = slice_cols(gates, H, H);
  const Var cand = tanh(add(slice_cols(x_proj, 2 * H, H), matmul(mul(r, h), u_h)));
  return add(mul(one_minus(z), h), mul(z, cand));
}

}  // namespace

Var gru_cell_step_projected(const Var& x_proj, const Var& h, const GruWeights& w) {
  check_recurrent(h, w.recurrent, 3);
  const Eigen::Index H = h.cols();
  if (x_proj.cols() != 3 * H || x_proj.rows() != h.rows()) {
    fail(ErrorKind::ShapeMismatch, "GRU input projection must be batch x 3H");
  }
  return gru_step_split(x_proj, h, slice_cols(w.recurrent, 0, 2 * H), slice_cols(w.recurrent, 2 * H, H));
}

Var gru_cell_step(const Var& x, const Var& h, const GruWeights& w) {
  if (x.cols() != w.input.rows()) fail(ErrorKind::ShapeMismatch, "GRU input width mismatch");
  return gru_cell_step_projected(add_bias(matmul(x, w.input), w.bias), h, w);
}

LstmState lstm_cell_step_projected(const Var& x_proj, const LstmState& s, const LstmWeights& w) {
  check_recurrent(s.h, w.recurrent, 4);
  const Eigen::Index H = s.h.cols();
  if (x_proj.cols() != 4 * H || x_proj.rows() != s.h.rows() || s.c.cols() != H) {
    fail(ErrorKind::ShapeMismatch, "LSTM state/projection shapes disagree");
  }
  const Var pre = add(x_proj, matmul(s.h, w.recurrent));
  const Var ifg = sigmoid(slice_cols(pre, 0, 2 * H));
  const Var i = slice_cols(ifg, 0, H);
  const Var f = slice_cols(ifg, H, H);
  const Var g = tanh(slice_cols(pre, 2 * H, H));
  const Var o = sigmoid(slice_cols(pre, 3 * H, H));
  const Var c = add(mul(f, s.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

LstmState lstm_cell_step(const Var& x, const LstmState& state, const LstmWeights& w) {
  if (x.cols() != w.input.rows()) fail(ErrorKind::ShapeMismatch, "LSTM input width mismatch");
  return lstm_cell_step_projected(add_bias(matmul(x, w.input), w.bias), state, w);
}

GruWeights make_gru_weights(ParamRegistry reg, int in, int hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  GruWeights w;
  w.input = reg.add("input", uniform_init(in, 3 * hidden, bound, rng));
  w.recurrent = reg.add("recurrent", uniform_init(hidden, 3 * hidden, bound, rng));
  w.bias = reg.add("bias", uniform_init(1, 3 * hidden, bound, rng));
  return w;
}

LstmWeights make_lstm_weights(ParamRegistry reg, int in, int hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmWeights w;
  w.input = reg.add("input", uniform_init(in, 4 * hidden, bound, rng));
  w.recurrent = reg.add("recurrent", uniform_init(hidden, 4 * hidden, bound, rng));
  w.bias = reg.add("bias", uniform_init(1, 4 * hidden, bound, rng));
  return w;
}

namespace {

Matrix logistic(const Matrix& a) { return (1.0 / (1.0 + (-a.array()).exp())).matrix(); }

}  // namespace

Var gru_sequence(const Var& proj, int batch, int steps, const Var& h0, const Var& recurrent) {
  check_recurrent(h0, recurrent, 3);
  const Eigen::Index H = h0.cols();
  if (proj.rows() != static_cast<Eigen::Index>(batch) * steps || proj.cols() != 3 * H || h0.rows() != batch) {
    fail(ErrorKind::ShapeMismatch, "GRU sequence shapes disagree");
  }
  struct Tape {
    std::vector<Matrix> h, z, r, c;
  };
  auto tape = std::make_shared<Tape>();
  const Matrix& P = proj.value();
  const Matrix& U = recurrent.value();
  Matrix h = h0.value();
  Matrix xp(batch, 3 * H);
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < batch; ++b) xp.row(b) = P.row(static_cast<Eigen::Index>(b) * steps + t);
    const Matrix gates = logistic(xp.leftCols(2 * H) + h * U.leftCols(2 * H));
    Matrix z = gates.leftCols(H), r = gates.rightCols(H);
    const Matrix rh = r.cwiseProduct(h);
    Matrix c = (xp.rightCols(H) + rh * U.rightCols(H)).array().tanh().matrix();
    Matrix next = h + z.cwiseProduct(c - h);
    tape->h.push_back(std::move(h));
    tape->z.push_back(std::move(z));
    tape->r.push_back(std::move(r));
    tape->c.push_back(std::move(c));
    h = std::move(next);
  }
  return custom_op(std::move(h), {proj, h0, recurrent}, [tape, batch, steps, H](Node& self) {
    Node* proj_n = self.inputs[0].get();
    Node* h0_n = self.inputs[1].get();
    Node* rec_n = self.inputs[2].get();
    const Matrix& U = rec_n->value;
    Matrix dP;
    if (proj_n->needs_grad) dP = Matrix::Zero(proj_n->value.rows(), 3 * H);
    Matrix dU = Matrix::Zero(H, 3 * H);
    Matrix dh = self.grad;
    Matrix da(batch, 3 * H);
    for (int t = steps - 1; t >= 0; --t) {
      const Matrix& h = tape->h[t];
      const Matrix& z = tape->z[t];
      const Matrix& r = tape->r[t];
      const Matrix& c = tape->c[t];
      const Matrix dz = dh.cwiseProduct(c - h);
      const Matrix dac = dh.cwiseProduct(z).array().cwiseProduct(1.0 - c.array().square()).matrix();
      Matrix dprev = dh - dh.cwiseProduct(z);
      const Matrix drh = dac * U.rightCols(H).transpose();
      dU.rightCols(H).noalias() += r.cwiseProduct(h).transpose() * dac;
      dprev += drh.cwiseProduct(r);
      da.leftCols(H) = (dz.array() * z.array() * (1.0 - z.array())).matrix();
      da.middleCols(H, H) = (drh.array() * h.array() * r.array() * (1.0 - r.array())).matrix();
      da.rightCols(H) = dac;
      dU.leftCols(2 * H).noalias() += h.transpose() * da.leftCols(2 * H);
      dprev.noalias() += da.leftCols(2 * H) * U.leftCols(2 * H).transpose();
      if (proj_n->needs_grad) {
        for (int b = 0; b < batch; ++b) dP.row(static_cast<Eigen::Index>(b) * steps + t) = da.row(b);
      }
      dh = std::move(dprev);
    }
    if (proj_n->needs_grad) proj_n->accumulate(dP);
    if (h0_n->needs_grad) h0_n->accumulate(dh);
    if (rec_n->needs_grad) rec_n->accumulate(dU);
  });
}

Var gru_last_state(const Var& x, int batch, int steps, const Var& h0, const GruWeights& w) {
  return gru_sequence(add_bias(matmul(x, w.input), w.bias), batch, steps, h0, w.recurrent);
}

Var lstm_last_state(const Var& x, int batch, int steps, const Var& h0, const LstmWeights& w) {
  const Var proj = add_bias(matmul(x, w.input), w.bias);
  LstmState s{h0, constant(Matrix::Zero(h0.rows(), h0.cols()))};
  for (int t = 0; t < steps; ++t) s = lstm_cell_step_projected(time_step(proj, batch, steps, t), s, w);
  return s.h;
}

CausalConvBlock::CausalConvBlock(ParamRegistry reg, int in, int out, int kernel_size, int dil,
                                 int strd, Rng& rng)
    : kernel(kernel_size), dilation(dil), stride(strd) {
  if (kernel < 1 || (kernel != 1 && kernel % 2 == 0)) {
    fail(ErrorKind::InvalidSpec, "conv kernel size must be odd or 1");
  }
  if (dilation < 1 || stride < 1) fail(ErrorKind::InvalidSpec, "dilation and stride must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(kernel * in));
  weight = reg.add("weight", uniform_init(kernel * in, out, bound, rng));
  bias = reg.add("bias", Matrix::Zero(1, out));
  if (in != out) {
    projection = Dense(reg.scoped("residual"), in, out, rng);
    has_projection = true;
  }
}

std::pair<Var, int> CausalConvBlock::forward(const Var& x, int batch, int steps,
                                             double dropout_rate, Mode mode, Rng& rng) const {
  const Var conv = causal_conv1d(x, weight, bias, batch, steps, dilation, stride);
  const Var act = dropout(relu(conv), dropout_rate, mode, rng);
  const std::vector<int> keep = strided_times(steps, stride);
  Var skip = stride == 1 ? x : select_time(x, batch, steps, keep);
  if (has_projection) skip = projection(skip);
  return {add(act, skip), static_cast<int>(keep.size())};
}

MultiHeadSelfAttention::MultiHeadSelfAttention(ParamRegistry reg, int dim, int h, Rng& rng)
    : query(reg.scoped("query"), dim, dim, rng),
      key(reg.scoped("key"), dim, dim, rng),
      value(reg.scoped("value"), dim, dim, rng),
      output(reg.scoped("output"), dim, dim, rng),
      heads(h) {
  if (h < 1 || dim % h != 0) {
    fail(ErrorKind::DimNotDivisible, std::to_string(dim) + " not divisible by " + std::to_string(h));
  }
}

Var MultiHeadSelfAttention::operator()(const Var& x, int batch, int steps) const {
  return output(attention(query(x), key(x), value(x), batch, steps, heads));
}

EncoderLayer::EncoderLayer(ParamRegistry reg, int dim, int heads, int ff_dim, Rng& rng)
    : attention(reg.scoped("attention"), dim, heads, rng),
      ff_in(reg.scoped("ff_in"), dim, ff_dim, rng),
      ff_out(reg.scoped("ff_out"), ff_dim, dim, rng),
      norm1_gain(reg.add("norm1.gain", Matrix::Ones(1, dim))),
      norm1_bias(reg.add("norm1.bias", Matrix::Zero(1, dim))),
      norm2_gain(reg.add("norm2.gain", Matrix::Ones(1, dim))),
      norm2_bias(reg.add("norm2.bias", Matrix::Zero(1, dim))) {}

Var EncoderLayer::forward(const Var& x, int batch, int steps, double dropout_rate, Mode mode,
                          Rng& rng) const {
  const Var att = dropout(attention(x, batch, steps), dropout_rate, mode, rng);
  const Var x1 = layer_norm(add(x, att), norm1_gain, norm1_bias);
  const Var ff = dropout(ff_out(dropout(relu(ff_in(x1)), dropout_rate, mode, rng)), dropout_rate,
                         mode, rng);
  return layer_norm(add(x1, ff), norm2_gain, norm2_bias);
}

}  // namespace gaitscale::grad
