#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gaitscale/grad.hpp"

namespace gaitscale::grad {

struct NamedParam {
  std::string name;
  Var var;
};

using ParamList = std::vector<NamedParam>;

/// Registers parameters under a common prefix.
class ParamRegistry {
 public:
  explicit ParamRegistry(ParamList& sink, std::string prefix = "")
      : sink_(&sink), prefix_(std::move(prefix)) {}

  Var add(const std::string& name, Matrix init);
  ParamRegistry scoped(const std::string& name) const;

 private:
  ParamList* sink_;
  std::string prefix_;
};

Matrix xavier_uniform(int fan_in, int fan_out, Rng& rng);
Matrix uniform_init(int rows, int cols, double bound, Rng& rng);

struct Dense {
  Var weight;  // in x out
  Var bias;    // 1 x out

  Dense() = default;
  Dense(ParamRegistry reg, int in, int out, Rng& rng);
  Var operator()(const Var& x) const { return add_bias(matmul(x, weight), bias); }
  int in() const { return static_cast<int>(weight.rows()); }
  int out() const { return static_cast<int>(weight.cols()); }
};

/// Gate order in the packed matrices: update z, reset r, candidate.
struct GruWeights {
  Var input;      // F x 3H
  Var recurrent;  // H x 3H
  Var bias;       // 1 x 3H
};

/// Gate order in the packed matrices: input i, forget f, cell candidate g, output o.
struct LstmWeights {
  Var input;      // F x 4H
  Var recurrent;  // H x 4H
  Var bias;       // 1 x 4H
};

/// z = s(xWz + hUz + bz), r = s(xWr + hUr + br),
/// c = tanh(xWh + (r*h)Uh + bh), h' = (1-z)*h + z*c.
Var gru_cell_step(const Var& x, const Var& h, const GruWeights& w);
/// Same recurrence with the input projection x*W + b precomputed (B x 3H).
Var gru_cell_step_projected(const Var& x_proj, const Var& h, const GruWeights& w);

struct LstmState {
  Var h;
  Var c;
};
LstmState lstm_cell_step(const Var& x, const LstmState& state, const LstmWeights& w);
LstmState lstm_cell_step_projected(const Var& x_proj, const LstmState& state, const LstmWeights& w);

GruWeights make_gru_weights(ParamRegistry reg, int in, int hidden, Rng& rng);
LstmWeights make_lstm_weights(ParamRegistry reg, int in, int hidden, Rng& rng);

/// GRU recurrence over a precomputed (B*T) x 3H input projection as a single
/// node with its own backward pass; returns the final hidden state.
Var gru_sequence(const Var& proj, int batch, int steps, const Var& h0, const Var& recurrent);

/// Runs a GRU over a (B*T) x F sequence; returns the final hidden state.
Var gru_last_state(const Var& x, int batch, int steps, const Var& h0, const GruWeights& w);
Var lstm_last_state(const Var& x, int batch, int steps, const Var& h0, const LstmWeights& w);

/// Causal dilated convolution followed by ReLU and dropout, plus a residual
/// path (identity when channel counts match, otherwise a 1x1 projection),
/// downsampled by `stride`.
struct CausalConvBlock {
  Var weight;
  Var bias;
  Dense projection;  // unused when channels match
  bool has_projection = false;
  int kernel = 1;
  int dilation = 1;
  int stride = 1;

  CausalConvBlock() = default;
  CausalConvBlock(ParamRegistry reg, int in, int out, int kernel, int dilation, int stride, Rng& rng);
  /// Returns the output and its step count.
  std::pair<Var, int> forward(const Var& x, int batch, int steps, double dropout_rate, Mode mode,
                              Rng& rng) const;
};

struct MultiHeadSelfAttention {
  Dense query, key, value, output;
  int heads = 1;

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(ParamRegistry reg, int dim, int heads, Rng& rng);
  Var operator()(const Var& x, int batch, int steps) const;
};

/// Post-norm encoder layer: x = LN(x + MHA(x)); x = LN(x + FF(x)).
struct EncoderLayer {
  MultiHeadSelfAttention attention;
  Dense ff_in, ff_out;
  Var norm1_gain, norm1_bias, norm2_gain, norm2_bias;

  EncoderLayer() = default;
  EncoderLayer(ParamRegistry reg, int dim, int heads, int ff_dim, Rng& rng);
  Var forward(const Var& x, int batch, int steps, double dropout_rate, Mode mode, Rng& rng) const;
};

}  // namespace gaitscale::grad
