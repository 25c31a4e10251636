#include "gaitscale/modelzoo.hpp"

#include <cmath>
#include <sstream>

#include "gaitscale/error.hpp"
#include "gaitscale/format.hpp"
#include "gaitscale/rng.hpp"

namespace gaitscale::model {

using grad::Batch;
using grad::Dense;
using grad::Matrix;
using grad::Mode;
using grad::ParamRegistry;
using grad::Var;

std::string_view to_string(Arch arch) {
  switch (arch) {
    case Arch::LI: return "LI";
    case Arch::LH: return "LH";
    case Arch::LI2: return "LI2";
    case Arch::LH2: return "LH2";
    case Arch::FCNN: return "FCNN";
    case Arch::GRU: return "GRU";
    case Arch::LSTM: return "LSTM";
    case Arch::TCN: return "TCN";
    case Arch::Transformer: return "Transformer";
  }
  return "?";
}

Arch parse_arch(std::string_view name) {
  for (Arch a : kAllArchs) {
    if (to_string(a) == name) return a;
  }
  fail(ErrorKind::InvalidSpec, "unknown architecture '" + std::string(name) + "'");
}

bool is_linear(Arch arch) {
  return arch == Arch::LI || arch == Arch::LH || arch == Arch::LI2 || arch == Arch::LH2;
}

std::string Hyperparams::describe(Arch arch) const {
  std::ostringstream os;
  switch (arch) {
    case Arch::LI:
    case Arch::LH: break;
    case Arch::LI2:
    case Arch::LH2: os << "lambda=" << format_double(lambda); break;
    case Arch::FCNN: os << "decay=" << decay << ",dropout=" << format_double(dropout); break;
    case Arch::GRU:
    case Arch::LSTM: os << "hidden_dim=" << hidden_dim; break;
    case Arch::TCN:
      os << "hidden_dim=" << hidden_dim << ",kernel=" << kernel << ",dilation=" << dilation
         << ",dropout=" << format_double(dropout);
      break;
    case Arch::Transformer:
      os << "hidden_dim=" << hidden_dim << ",num_layers=" << num_layers << ",num_heads=" << num_heads
         << ",ff_dim=" << ff_dim << ",dropout=" << format_double(dropout);
      break;
  }
  return os.str();
}

void ModelSpec::validate() const {
  auto bad = [&](const std::string& what) {
    fail(ErrorKind::InvalidSpec, std::string(to_string(arch)) + ": " + what);
  };
  if (steps < 1 || features < 1 || trials < 1) bad("steps, features and trials must be >= 1");
  if (!(hp.dropout >= 0.0 && hp.dropout < 1.0)) bad("dropout must be in [0, 1)");
  switch (arch) {
    case Arch::LI2:
    case Arch::LH2:
      if (!(hp.lambda >= 0.0)) bad("lambda must be >= 0");
      break;
    case Arch::FCNN:
      if (hp.decay < 2) bad("decay must be >= 2");
      break;
    case Arch::GRU:
    case Arch::LSTM:
      if (hp.hidden_dim < 1) bad("hidden_dim must be >= 1");
      break;
    case Arch::TCN:
      if (hp.hidden_dim < 1 || hp.kernel < 1 || hp.dilation < 1) bad("hidden_dim, kernel, dilation must be >= 1");
      break;
    case Arch::Transformer:
      if (hp.hidden_dim < 2 || hp.num_layers < 1 || hp.num_heads < 1 || hp.ff_dim < 1) bad("non-positive size");
      if (hp.hidden_dim % hp.num_heads != 0) bad("hidden_dim must be divisible by num_heads");
      if (hp.hidden_dim % 2 != 0) bad("hidden_dim must be even");
      break;
    default: break;
  }
}

int embedding_dim(int trials) {
  if (trials < 1) fail(ErrorKind::InvalidSpec, "trial count must be >= 1");
  int e = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(trials))));
  while (e * e < trials) ++e;
  while (e > 1 && (e - 1) * (e - 1) >= trials) --e;
  return e;
}

std::vector<int> fcnn_widths(int input_width, int decay) {
  std::vector<int> widths;
  int w = input_width;
  while (w / decay >= 8) {
    w /= decay;
    widths.push_back(w);
  }
  while (widths.size() < 2) widths.push_back(8);
  return widths;
}

namespace {

constexpr double kEmbeddingInit = 0.5;

class Conditioned : public grad::Network {
 protected:
  Conditioned(const ModelSpec& spec, Rng& rng) : spec_(spec), embed_(embedding_dim(spec.trials)) {
    table_ = ParamRegistry(params_).add("embedding", grad::uniform_init(spec.trials, embed_, kEmbeddingInit, rng));
  }

  Var embedding(const Batch& b) const {
    for (int v : b.trials) {
      if (v < 0 || v >= spec_.trials) {
        fail(ErrorKind::UnknownTrial, "trial " + std::to_string(v) + " outside embedding table of " +
                                          std::to_string(spec_.trials));
      }
    }
    return grad::gather_rows(table_, b.trials);
  }

  Var sequence_with_flag(const Batch& b) const {
    if (b.steps != spec_.steps || b.x.cols() != spec_.features) {
      fail(ErrorKind::ShapeMismatch, "window " + std::to_string(b.steps) + "x" + std::to_string(b.x.cols()) +
                                         " does not match model " + std::to_string(spec_.steps) + "x" +
                                         std::to_string(spec_.features));
    }
    const Var parts[] = {grad::constant(b.x), grad::repeat_time(grad::constant(b.flags), b.steps)};
    return grad::concat_cols(parts);
  }

  ModelSpec spec_;
  int embed_;
  Var table_;
};

class RecurrentNet final : public Conditioned {
 public:
  RecurrentNet(const ModelSpec& spec, Rng& rng) : Conditioned(spec, rng) {
    ParamRegistry reg(params_);
    const int h = spec.hp.hidden_dim;
    init_ = Dense(reg.scoped("h0"), embed_, h, rng);
    if (spec.arch == Arch::LSTM) {
      lstm_ = grad::make_lstm_weights(reg.scoped("lstm"), spec.features + 1, h, rng);
    } else {
      gru_ = grad::make_gru_weights(reg.scoped("gru"), spec.features + 1, h, rng);
    }
    head_ = Dense(reg.scoped("head"), h, h, rng);
    out_ = Dense(reg.scoped("out"), h, 2, rng);
  }

  Var forward(const Batch& b, Mode, Rng&) const override {
    const Var x = sequence_with_flag(b);
    const Var h0 = init_(embedding(b));
    const Var h = spec_.arch == Arch::LSTM ? grad::lstm_last_state(x, b.batch, b.steps, h0, lstm_)
                                           : grad::gru_last_state(x, b.batch, b.steps, h0, gru_);
    return out_(grad::relu(head_(h)));
  }

 private:
  Dense init_, head_, out_;
  grad::GruWeights gru_;
  grad::LstmWeights lstm_;
};

class FcnnNet final : public Conditioned {
 public:
  FcnnNet(const ModelSpec& spec, Rng& rng) : Conditioned(spec, rng) {
    ParamRegistry reg(params_);
    int in = spec.steps * spec.features + embed_ + 1;
    int i = 0;
    for (int w : fcnn_widths(in, spec.hp.decay)) {
      layers_.emplace_back(reg.scoped("fc" + std::to_string(i++)), in, w, rng);
      in = w;
    }
    out_ = Dense(reg.scoped("out"), in, 2, rng);
  }

  int input_width() const { return layers_.front().in(); }

  Var forward(const Batch& b, Mode mode, Rng& rng) const override {
    if (b.steps != spec_.steps || b.x.cols() != spec_.features) {
      fail(ErrorKind::ShapeMismatch, "FCNN window does not match model shape");
    }
    const Var x = grad::constant(b.x);
    std::vector<Var> parts;
    for (int t = 0; t < b.steps; ++t) parts.push_back(grad::time_step(x, b.batch, b.steps, t));
    parts.push_back(embedding(b));
    parts.push_back(grad::constant(b.flags));
    Var h = grad::concat_cols(parts);
    for (const auto& layer : layers_) h = grad::dropout(grad::relu(layer(h)), dropout_rate, mode, rng);
    return out_(h);
  }

 private:
  std::vector<Dense> layers_;
  Dense out_;
};

class TcnNet final : public Conditioned {
 public:
  TcnNet(const ModelSpec& spec, Rng& rng) : Conditioned(spec, rng) {
    ParamRegistry reg(params_);
    const auto& hp = spec.hp;
    first_ = grad::CausalConvBlock(reg.scoped("block0"), spec.features + 1 + embed_, hp.hidden_dim, hp.kernel,
                                   hp.dilation, 2, rng);
    second_ = grad::CausalConvBlock(reg.scoped("block1"), hp.hidden_dim, hp.hidden_dim, hp.kernel,
                                    2 * hp.dilation, 2, rng);
    head_ = Dense(reg.scoped("head"), hp.hidden_dim, hp.hidden_dim, rng);
    out_ = Dense(reg.scoped("out"), hp.hidden_dim, 2, rng);
  }

  Var forward(const Batch& b, Mode mode, Rng& rng) const override {
    const Var parts[] = {sequence_with_flag(b), grad::repeat_time(embedding(b), b.steps)};
    auto [h1, s1] = first_.forward(grad::concat_cols(parts), b.batch, b.steps, dropout_rate, mode, rng);
    auto [h2, s2] = second_.forward(h1, b.batch, s1, dropout_rate, mode, rng);
    return out_(grad::relu(head_(grad::time_step(h2, b.batch, s2, s2 - 1))));
  }

 private:
  grad::CausalConvBlock first_, second_;
  Dense head_, out_;
};

class TransformerNet final : public Conditioned {
 public:
  TransformerNet(const ModelSpec& spec, Rng& rng) : Conditioned(spec, rng) {
    ParamRegistry reg(params_);
    const auto& hp = spec.hp;
    input_ = Dense(reg.scoped("input"), spec.features + 1, hp.hidden_dim, rng);
    token_ = Dense(reg.scoped("token"), embed_, hp.hidden_dim, rng);
    for (int i = 0; i < hp.num_layers; ++i) {
      layers_.emplace_back(reg.scoped("encoder" + std::to_string(i)), hp.hidden_dim, hp.num_heads, hp.ff_dim, rng);
    }
    head1_ = Dense(reg.scoped("head1"), hp.hidden_dim, hp.hidden_dim, rng);
    head2_ = Dense(reg.scoped("head2"), hp.hidden_dim, hp.hidden_dim, rng);
    out_ = Dense(reg.scoped("out"), hp.hidden_dim, 2, rng);
    pe_ = grad::positional_encoding(spec.steps + 1, hp.hidden_dim);
  }

  Var forward(const Batch& b, Mode mode, Rng& rng) const override {
    const int steps = b.steps + 1;
    Var x = grad::append_time(input_(sequence_with_flag(b)), token_(embedding(b)), b.batch, b.steps);
    Matrix pe(static_cast<Eigen::Index>(b.batch) * steps, pe_.cols());
    for (int i = 0; i < b.batch; ++i) pe.middleRows(static_cast<Eigen::Index>(i) * steps, steps) = pe_;
    x = grad::add(x, grad::constant(pe));
    for (const auto& layer : layers_) x = layer.forward(x, b.batch, steps, dropout_rate, mode, rng);
    Var h = grad::mean_time(x, b.batch, steps);
    h = grad::relu(head1_(h));
    h = grad::relu(head2_(h));
    return out_(h);
  }

 private:
  Dense input_, token_, head1_, head2_, out_;
  std::vector<grad::EncoderLayer> layers_;
  Matrix pe_;
};

}  // namespace

std::unique_ptr<grad::Network> build_network(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  switch (spec.arch) {
    case Arch::FCNN: return std::make_unique<FcnnNet>(spec, rng);
    case Arch::GRU:
    case Arch::LSTM: return std::make_unique<RecurrentNet>(spec, rng);
    case Arch::TCN: return std::make_unique<TcnNet>(spec, rng);
    case Arch::Transformer: return std::make_unique<TransformerNet>(spec, rng);
    default: fail(ErrorKind::InvalidSpec, std::string(to_string(spec.arch)) + " is not a network architecture");
  }
}

Eigen::RowVectorXd linear_design(Arch arch, const Eigen::MatrixXd& S) {
  if (arch == Arch::LI || arch == Arch::LI2) return S.row(S.rows() - 1);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = S;
  return Eigen::Map<const Eigen::RowVectorXd>(r.data(), r.size());
}

LinearCoefficients fit_linear(std::span<const Sample> samples, Arch arch, double lambda) {
  if (!is_linear(arch)) fail(ErrorKind::InvalidSpec, std::string(to_string(arch)) + " is not linear");
  if (samples.size() < 2) {
    fail(ErrorKind::InsufficientSamples, "linear fit needs >= 2 samples, got " + std::to_string(samples.size()));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  const Eigen::Index p = linear_design(arch, samples.front().S).size();
  Eigen::MatrixXd X(n, p), Y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<size_t>(i)];
    const auto row = linear_design(arch, s.S);
    if (row.size() != p) fail(ErrorKind::ShapeMismatch, "samples differ in window shape");
    X.row(i) = row;
    Y(i, 0) = s.y.ml;
    Y(i, 1) = s.y.ap;
  }
  const Eigen::RowVectorXd xm = X.colwise().mean();
  const Eigen::RowVector2d ym = Y.colwise().mean();
  X.rowwise() -= xm;
  Y.rowwise() -= ym;
  LinearCoefficients c;
  const bool ridge = (arch == Arch::LI2 || arch == Arch::LH2) && lambda > 0.0;
  if (!ridge) {
    c.weights = X.completeOrthogonalDecomposition().solve(Y);
  } else if (p <= n) {
    Eigen::MatrixXd g = X.transpose() * X;
    g.diagonal().array() += lambda;
    c.weights = g.ldlt().solve(X.transpose() * Y);
  } else {
    Eigen::MatrixXd g = X * X.transpose();
    g.diagonal().array() += lambda;
    c.weights = X.transpose() * g.ldlt().solve(Y);
  }
  c.intercept = ym - xm * c.weights;
  return c;
}

Eigen::MatrixXd TrainedModel::predict(std::span<const Sample> samples) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(samples.size()), 2);
  if (samples.empty()) return out;
  std::vector<Sample> z(samples.begin(), samples.end());
  for (auto& s : z) {
    if (s.S.rows() != spec.steps || s.S.cols() != spec.features) {
      fail(ErrorKind::ShapeMismatch, "sample window " + std::to_string(s.S.rows()) + "x" +
                                         std::to_string(s.S.cols()) + " does not match model");
    }
    s.S = features.transform(s.S, s.trial);
  }
  if (is_linear(spec.arch)) {
    for (size_t i = 0; i < z.size(); ++i) {
      const auto it = linear.find({z[i].trial, z[i].flag});
      if (it == linear.end()) {
        fail(ErrorKind::UnknownTrial, "no linear model for trial " + std::to_string(z[i].trial) + ", flag " +
                                          std::to_string(z[i].flag));
      }
      out.row(static_cast<Eigen::Index>(i)) = linear_design(spec.arch, z[i].S) * it->second.weights + it->second.intercept;
    }
    return out;
  }
  for (const auto& s : z) {
    if (s.trial < 0 || s.trial >= spec.trials) fail(ErrorKind::UnknownTrial, "trial " + std::to_string(s.trial));
  }
  const Eigen::MatrixXd scaled = grad::predict_all(*network, to_tensor(z));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const auto y = targets.inverse({scaled(i, 0), scaled(i, 1)});
    out(i, 0) = y.ml;
    out(i, 1) = y.ap;
  }
  return out;
}

TrainedModel fit_model(const ModelSpec& spec, std::span<const Sample> train, std::span<const Sample> val,
                       const grad::TrainConfig& config) {
  spec.validate();
  if (train.empty()) fail(ErrorKind::TooFewSamples, "empty training set");
  TrainedModel m;
  m.spec = spec;
  if (is_linear(spec.arch)) {
    std::vector<Sample> all(train.begin(), train.end());
    all.insert(all.end(), val.begin(), val.end());
    m.features = Standardizer::fit(all);
    m.features.apply(all);
    std::map<std::pair<int, int>, std::vector<Sample>> groups;
    for (auto& s : all) groups[{s.trial, s.flag}].push_back(std::move(s));
    for (const auto& [key, group] : groups) {
      try {
        m.linear[key] = fit_linear(group, spec.arch, spec.hp.lambda);
      } catch (const Error& e) {
        fail(e.kind(), std::string(e.what()) + " (trial " + std::to_string(key.first) + ", flag " +
                           std::to_string(key.second) + ")");
      }
    }
    return m;
  }
  if (val.empty()) fail(ErrorKind::TooFewSamples, "nonlinear models need a validation split");
  m.features = Standardizer::fit(train);
  m.targets = TargetScaler::fit(train);
  std::vector<Sample> tr(train.begin(), train.end()), va(val.begin(), val.end());
  m.features.apply(tr);
  m.features.apply(va);
  Rng rng(derive_seed(config.seed, {0x696e6974ULL}));
  auto net = build_network(spec, rng);
  grad::TrainConfig cfg = config;
  cfg.dropout = spec.hp.dropout;
  m.training = grad::train_loop(*net, to_tensor(tr, m.targets), to_tensor(va, m.targets), cfg);
  net->dropout_rate = 0.0;
  m.network = std::move(net);
  return m;
}

}  // namespace gaitscale::model
