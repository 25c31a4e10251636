#include <cstdio>
#include <functional>
#include <map>
#include <random>

#include "acceptance/harness.hpp"
#include "gaitscale/layers.hpp"
#include "support/gradcheck.hpp"

namespace acceptance {
namespace {

using namespace gaitscale;
using namespace gaitscale::grad;
using gaitscale::testing::gradient_error;
using gaitscale::testing::random_matrix;

constexpr int kInstances = 50;
constexpr double kTolerance = 1e-6;

struct Draw {
  Rng& rng;
  int operator()(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
};

std::vector<Var> with_params(std::vector<Var> vars, const ParamList& params) {
  for (const auto& p : params) vars.push_back(p.var);
  return vars;
}

// One random instance per call; returns the gradient error.
using Check = std::function<double(Rng&)>;

double dense(Rng& rng) {
  Draw d{rng};
  const int B = d(1, 4), in = d(1, 5), out = d(1, 5);
  ParamList params;
  Dense layer(ParamRegistry(params), in, out, rng);
  Var x = parameter(random_matrix(B, in, rng));
  const Matrix proj = random_matrix(B, out, rng);
  return gradient_error([&] { return weighted_sum(layer(x), proj); }, with_params({x}, params));
}

double gru_cell(Rng& rng) {
  Draw d{rng};
  const int B = d(1, 3), F = d(1, 4), H = d(1, 5);
  ParamList params;
  const GruWeights w = make_gru_weights(ParamRegistry(params), F, H, rng);
  Var x = parameter(random_matrix(B, F, rng));
  Var h = parameter(random_matrix(B, H, rng));
  const Matrix proj = random_matrix(B, H, rng);
  return gradient_error([&] { return weighted_sum(gru_cell_step(x, h, w), proj); }, with_params({x, h}, params));
}

double lstm_cell(Rng& rng) {
  Draw d{rng};
  const int B = d(1, 3), F = d(1, 4), H = d(1, 5);
  ParamList params;
  const LstmWeights w = make_lstm_weights(ParamRegistry(params), F, H, rng);
  Var x = parameter(random_matrix(B, F, rng));
  Var h = parameter(random_matrix(B, H, rng));
  Var c = parameter(random_matrix(B, H, rng));
  const Matrix ph = random_matrix(B, H, rng), pc = random_matrix(B, H, rng);
  return gradient_error(
      [&] {
        const LstmState s = lstm_cell_step(x, {h, c}, w);
        return add(weighted_sum(s.h, ph), weighted_sum(s.c, pc));
      },
      with_params({x, h, c}, params));
}

double gru_sequence_check(Rng& rng) {
  Draw d{rng};
  const int B = d(1, 3), T = d(1, 6), F = d(1, 3), H = d(1, 4);
  ParamList params;
  const GruWeights w = make_gru_weights(ParamRegistry(params), F, H, rng);
  Var x = parameter(random_matrix(B * T, F, rng));
  Var h0 = parameter(random_matrix(B, H, rng));
  const Matrix proj = random_matrix(B, H, rng);
  return gradient_error([&] { return weighted_sum(gru_last_state(x, B, T, h0, w), proj); },
                        with_params({x, h0}, params));
}

double lstm_sequence_check(Rng& rng) {
  Draw d{rng};
  const int B = d(1, 3), T = d(1, 6), F = d(1, 3), H = d(1, 4);
  ParamList params;
  const LstmWeights w = make_lstm_weights(ParamRegistry(params), F, H, rng);
  Var x = parameter(random_matrix(B * T, F, rng));
  Var h0 = parameter(random_matrix(B, H, rng));
  const Matrix proj = random_matrix(B, H, rng);
  return gradient_error([&] { return weighted_sum(lstm_last_state(x, B, T, h0, w), proj); },
                        with_params({x, h0}, params));
}

double conv1d(Rng& rng) {
  Draw d{rng};
  const int B = d(1, 3), T = d(1, 8), Fin = d(1, 3), Fout = d(1, 3), K = d(1, 3), dil = d(1, 3), stride = d(1, 3);
  Var x = parameter(random_matrix(B * T, Fin, rng));
  Var w = parameter(random_matrix(K * Fin, Fout, rng));
  Var b = parameter(random_matrix(1, Fout, rng));
  const int steps_out = static_cast<int>(strided_times(T, stride).size());
  const Matrix proj = random_matrix(B * steps_out, Fout, rng);
  return gradient_error([&] { return weighted_sum(causal_conv1d(x, w, b, B, T, dil, stride), proj); }, {x, w, b});
}

double conv_block(Rng& rng) {
  Draw d{rng};
  const int B = d(1, 3), T = d(1, 8), in = d(1, 3), out = d(1, 3), K = 2 * d(0, 2) + 1, dil = d(1, 2), stride = d(1, 2);
  ParamList params;
  CausalConvBlock block(ParamRegistry(params), in, out, K, dil, stride, rng);
  Var x = parameter(random_matrix(B * T, in, rng));
  const int steps_out = static_cast<int>(strided_times(T, stride).size());
  const Matrix proj = random_matrix(B * steps_out, out, rng);
  return gradient_error(
      [&] {
        Rng unused(0);
        return weighted_sum(block.forward(x, B, T, 0.0, Mode::Eval, unused).first, proj);
      },
      with_params({x}, params));
}

double self_attention(Rng& rng) {
  Draw d{rng};
  const int heads = d(1, 2), dim = heads * d(1, 3), B = d(1, 3), T = d(1, 5);
  ParamList params;
  MultiHeadSelfAttention mha(ParamRegistry(params), dim, heads, rng);
  Var x = parameter(random_matrix(B * T, dim, rng));
  const Matrix proj = random_matrix(B * T, dim, rng);
  return gradient_error([&] { return weighted_sum(mha(x, B, T), proj); }, with_params({x}, params));
}

double encoder(Rng& rng) {
  Draw d{rng};
  const int heads = d(1, 2), dim = heads * d(1, 3), B = d(1, 2), T = d(1, 4), ff = d(2, 6);
  ParamList params;
  EncoderLayer enc(ParamRegistry(params), dim, heads, ff, rng);
  Var x = parameter(random_matrix(B * T, dim, rng));
  const Matrix proj = random_matrix(B * T, dim, rng);
  return gradient_error(
      [&] {
        Rng unused(0);
        return weighted_sum(enc.forward(x, B, T, 0.0, Mode::Eval, unused), proj);
      },
      with_params({x}, params));
}

double norm(Rng& rng) {
  Draw d{rng};
  const int rows = d(1, 4), cols = d(2, 6);
  Var x = parameter(random_matrix(rows, cols, rng));
  Var g = parameter(random_matrix(1, cols, rng));
  Var b = parameter(random_matrix(1, cols, rng));
  const Matrix proj = random_matrix(rows, cols, rng);
  return gradient_error([&] { return weighted_sum(layer_norm(x, g, b), proj); }, {x, g, b});
}

double elementwise(Rng& rng) {
  Draw d{rng};
  const int rows = d(1, 4), cols = d(1, 4), out = d(1, 3);
  Var a = parameter(random_matrix(rows, cols, rng));
  Var b = parameter(random_matrix(rows, cols, rng));
  Var m = parameter(random_matrix(cols, out, rng));
  Var bias = parameter(random_matrix(1, cols, rng));
  const Matrix proj = random_matrix(rows, out, rng);
  return gradient_error(
      [&] {
        const Var mixed = add(sigmoid(mul(a, b)), tanh(add_bias(sub(a, scale(b, 0.3)), bias)));
        return weighted_sum(matmul(add(relu(mixed), one_minus(a)), m), proj);
      },
      {a, b, m, bias});
}

double loss(Rng& rng) {
  Draw d{rng};
  const int rows = d(1, 6), cols = d(1, 3);
  Var p = parameter(random_matrix(rows, cols, rng));
  Var t = parameter(random_matrix(rows, cols, rng));
  return gradient_error([&] { return mse_loss(p, t); }, {p, t});
}

double columns(Rng& rng) {
  Draw d{rng};
  const int rows = d(1, 4), ca = d(2, 5), cb = d(1, 4);
  const int start = d(0, ca - 1), count = d(1, ca - start);
  Var a = parameter(random_matrix(rows, ca, rng));
  Var b = parameter(random_matrix(rows, cb, rng));
  const Matrix proj = random_matrix(rows, count + cb, rng);
  return gradient_error(
      [&] {
        const Var parts[] = {slice_cols(a, start, count), b};
        return weighted_sum(concat_cols(parts), proj);
      },
      {a, b});
}

double sequence_helpers(Rng& rng) {
  Draw d{rng};
  const int B = d(1, 3), T = d(2, 5), F = d(1, 3), V = d(1, 4);
  Var x = parameter(random_matrix(B * T, F, rng));
  Var tok = parameter(random_matrix(B, F, rng));
  Var table = parameter(random_matrix(V, F, rng));
  std::vector<int> ids(B), times{0, T - 1};
  for (auto& id : ids) id = d(0, V - 1);
  const Matrix p1 = random_matrix(B, F, rng), p2 = random_matrix(B * 2, F, rng), p3 = random_matrix(B * T, F, rng);
  return gradient_error(
      [&] {
        std::vector<Var> steps;
        for (int t = 0; t < T; ++t) steps.push_back(time_step(x, B, T, t));
        const Var restacked = stack_time(steps);
        const Var a = weighted_sum(mean_time(append_time(restacked, tok, B, T), B, T + 1), p1);
        const Var s = weighted_sum(select_time(x, B, T, times), p2);
        const Var r = weighted_sum(mul(repeat_time(gather_rows(table, ids), T), x), p3);
        return add(add(a, s), r);
      },
      {x, tok, table});
}

Outcome gradients() {
  const std::vector<std::pair<std::string, Check>> layers{
      {"dense", dense},
      {"gru_cell", gru_cell},
      {"lstm_cell", lstm_cell},
      {"gru_sequence", gru_sequence_check},
      {"lstm_sequence", lstm_sequence_check},
      {"causal_conv1d", conv1d},
      {"conv_block", conv_block},
      {"self_attention", self_attention},
      {"encoder_layer", encoder},
      {"layer_norm", norm},
      {"elementwise", elementwise},
      {"mse_loss", loss},
      {"slice_concat", columns},
      {"sequence_ops", sequence_helpers},
  };
  Rng rng(1234);
  bool ok = true;
  double worst = 0.0;
  std::string worst_layer;
  for (const auto& [name, check] : layers) {
    for (int i = 0; i < kInstances; ++i) {
      const double e = check(rng);
      if (e > worst) {
        worst = e;
        worst_layer = name;
      }
      ok = ok && e < kTolerance;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu layers x %d instances, max rel err %.2e (%s)", layers.size(), kInstances, worst,
                worst_layer.c_str());
  return {ok, buf};
}

}  // namespace

std::vector<Criterion> gradient_criteria() { return {{3, "gradient correctness", 120.0, gradients}}; }

}  // namespace acceptance
