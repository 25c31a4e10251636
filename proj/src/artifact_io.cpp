#include "gaitscale/artifact_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "gaitscale/error.hpp"
#include "json.hpp"

namespace gaitscale::io {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double num(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    fail(ErrorKind::IoFailure, "bad number '" + s + "'");
  }
  return j.get<double>();
}

json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

std::vector<double> nums(const json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(num(x));
  return v;
}

json header(const char* kind) { return json{{"schema_version", kSchemaVersion}, {"kind", kind}}; }

json parse_checked(const std::string& text, const char* kind, const fs::path& path) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::IoFailure, path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("schema_version")) fail(ErrorKind::IoFailure, path.string() + ": not a report");
  const int version = j.at("schema_version").get<int>();
  if (version != kSchemaVersion) {
    fail(ErrorKind::SchemaVersionMismatch, path.string() + ": schema version " + std::to_string(version) +
                                               ", expected " + std::to_string(kSchemaVersion));
  }
  if (j.value("kind", "") != kind) fail(ErrorKind::IoFailure, path.string() + ": not a " + kind + " report");
  return j;
}

template <class F>
auto guarded(const fs::path& path, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(ErrorKind::IoFailure, path.string() + ": " + e.what());
  }
}

json hp_json(const model::Hyperparams& hp) {
  return json{{"hidden_dim", hp.hidden_dim}, {"decay", hp.decay},         {"dropout", num(hp.dropout)},
              {"kernel", hp.kernel},         {"dilation", hp.dilation},   {"num_layers", hp.num_layers},
              {"num_heads", hp.num_heads},   {"ff_dim", hp.ff_dim},       {"lambda", num(hp.lambda)}};
}

model::Hyperparams hp_from(const json& j) {
  model::Hyperparams hp;
  hp.hidden_dim = j.at("hidden_dim").get<int>();
  hp.decay = j.at("decay").get<int>();
  hp.dropout = num(j.at("dropout"));
  hp.kernel = j.at("kernel").get<int>();
  hp.dilation = j.at("dilation").get<int>();
  hp.num_layers = j.at("num_layers").get<int>();
  hp.num_heads = j.at("num_heads").get<int>();
  hp.ff_dim = j.at("ff_dim").get<int>();
  hp.lambda = num(j.at("lambda"));
  return hp;
}

json spec_json(const model::ModelSpec& s) {
  return json{{"arch", std::string(model::to_string(s.arch))},
              {"hp", hp_json(s.hp)},
              {"steps", s.steps},
              {"features", s.features},
              {"trials", s.trials}};
}

model::ModelSpec spec_from(const json& j) {
  model::ModelSpec s;
  s.arch = model::parse_arch(j.at("arch").get<std::string>());
  s.hp = hp_from(j.at("hp"));
  s.steps = j.at("steps").get<int>();
  s.features = j.at("features").get<int>();
  s.trials = j.at("trials").get<int>();
  return s;
}

void put_le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

double get_le(const std::string& in, size_t pos) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  return std::bit_cast<double>(bits);
}

struct BlockWriter {
  json index = json::array();
  std::string data;

  void add(const std::string& name, const Eigen::MatrixXd& m) {
    index.push_back(json{{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put_le(data, m(r, c));
  }
};

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  out << text;
  out.close();
  if (!out) fail(ErrorKind::IoFailure, "write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoFailure, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_report(const cv::EvalCurve& c, const fs::path& path) {
  if (c.phases.empty()) fail(ErrorKind::RejectedEmpty, "curve has no phases");
  json j = header("eval_curve");
  j["phases"] = nums(c.phases);
  for (int a = 0; a < 2; ++a) {
    const char* axis = a == 0 ? "ml" : "ap";
    json fold = json::array();
    for (const auto& f : c.fold_r2[a]) fold.push_back(nums(f));
    j[axis] = json{{"r2", nums(c.r2[a])}, {"rmse", nums(c.rmse[a])}, {"fold_r2", fold}, {"smoothed", nums(c.smoothed[a])}};
  }
  j["rmse_pooled"] = nums(c.rmse_pooled);
  write_text(path, j.dump(1) + "\n");
}

cv::EvalCurve load_curve(const fs::path& path) {
  const json j = parse_checked(read_text(path), "eval_curve", path);
  return guarded(path, [&] {
    cv::EvalCurve c;
    c.phases = nums(j.at("phases"));
    for (int a = 0; a < 2; ++a) {
      const json& ax = j.at(a == 0 ? "ml" : "ap");
      c.r2[a] = nums(ax.at("r2"));
      c.rmse[a] = nums(ax.at("rmse"));
      c.smoothed[a] = nums(ax.at("smoothed"));
      for (const auto& f : ax.at("fold_r2")) c.fold_r2[a].push_back(nums(f));
    }
    c.rmse_pooled = nums(j.at("rmse_pooled"));
    return c;
  });
}

void save_report(const cv::ModelScore& s, const fs::path& path) {
  if (s.models.empty()) fail(ErrorKind::RejectedEmpty, "score table has no models");
  json j = header("model_score");
  j["models"] = s.models;
  j["score"] = nums(s.score);
  j["normalized"] = nums(s.normalized);
  j["psi"] = nums(s.psi);
  j["critical"] = num(s.critical);
  j["zero_rmse"] = s.zero_rmse;
  write_text(path, j.dump(1) + "\n");
}

cv::ModelScore load_score(const fs::path& path) {
  const json j = parse_checked(read_text(path), "model_score", path);
  return guarded(path, [&] {
    cv::ModelScore s;
    s.models = j.at("models").get<std::vector<std::string>>();
    s.score = nums(j.at("score"));
    s.normalized = nums(j.at("normalized"));
    s.psi = nums(j.at("psi"));
    s.critical = num(j.at("critical"));
    s.zero_rmse = j.at("zero_rmse").get<bool>();
    return s;
  });
}

namespace {

json timescale_json(const ts::TimescaleReport& r) {
  if (r.phases.empty()) fail(ErrorKind::RejectedEmpty, "timescale report has no phases");
  json j;
  j["modality"] = r.modality;
  j["axis"] = r.axis;
  j["intercept"] = num(r.intercept);
  j["phases"] = nums(r.phases);
  j["delta_r2"] = nums(r.delta_r2);
  j["peak"] = json{{"phase", num(r.peak.phase)}, {"value", num(r.peak.value)}};
  j["onset"] = r.onset ? num(*r.onset) : json(nullptr);
  j["breakpoint"] = num(r.breakpoint);
  j["breakpoint_raw"] = num(r.breakpoint_raw);
  j["swing_initiation"] = r.swing_initiation ? num(*r.swing_initiation) : json(nullptr);
  j["critical"] = num(r.critical);
  return j;
}

ts::TimescaleReport timescale_from(const json& j) {
  ts::TimescaleReport r;
  r.modality = j.at("modality").get<std::string>();
  r.axis = j.at("axis").get<int>();
  r.intercept = num(j.at("intercept"));
  r.phases = nums(j.at("phases"));
  r.delta_r2 = nums(j.at("delta_r2"));
  r.peak = {num(j.at("peak").at("phase")), num(j.at("peak").at("value"))};
  if (!j.at("onset").is_null()) r.onset = num(j.at("onset"));
  r.breakpoint = num(j.at("breakpoint"));
  r.breakpoint_raw = num(j.at("breakpoint_raw"));
  if (!j.at("swing_initiation").is_null()) r.swing_initiation = num(j.at("swing_initiation"));
  r.critical = num(j.at("critical"));
  return r;
}

}  // namespace

void save_report(const ts::TimescaleReport& r, const fs::path& path) {
  json j = header("timescale");
  j.update(timescale_json(r));
  write_text(path, j.dump(1) + "\n");
}

ts::TimescaleReport load_timescale(const fs::path& path) {
  const json j = parse_checked(read_text(path), "timescale", path);
  return guarded(path, [&] { return timescale_from(j); });
}

void save_report(const std::vector<ts::TimescaleReport>& reports, const fs::path& path) {
  if (reports.empty()) fail(ErrorKind::RejectedEmpty, "no timescale reports");
  json j = header("timescale_set");
  j["reports"] = json::array();
  for (const auto& r : reports) j["reports"].push_back(timescale_json(r));
  write_text(path, j.dump(1) + "\n");
}

std::vector<ts::TimescaleReport> load_timescales(const fs::path& path) {
  const json j = parse_checked(read_text(path), "timescale_set", path);
  return guarded(path, [&] {
    std::vector<ts::TimescaleReport> out;
    for (const auto& r : j.at("reports")) out.push_back(timescale_from(r));
    return out;
  });
}

void save_checkpoint(const model::TrainedModel& m, const fs::path& path) {
  BlockWriter w;
  const auto moments = [&](const std::string& prefix, const Standardizer::Moments& mo) {
    w.add(prefix + ".mean", mo.mean);
    w.add(prefix + ".scale", mo.scale);
  };
  moments("features.pooled", m.features.pooled());
  for (const auto& [trial, mo] : m.features.per_trial()) moments("features.trial." + std::to_string(trial), mo);
  Eigen::MatrixXd targets(2, 2);
  targets << m.targets.mean[0], m.targets.mean[1], m.targets.scale[0], m.targets.scale[1];
  w.add("targets", targets);
  for (const auto& [key, coef] : m.linear) {
    const auto prefix = "linear." + std::to_string(key.first) + "." + std::to_string(key.second);
    w.add(prefix + ".weights", coef.weights);
    w.add(prefix + ".intercept", coef.intercept);
  }
  if (m.network) {
    for (const auto& p : m.network->params()) w.add("net." + p.name, p.var.value());
  }

  json history = json::array();
  for (const auto& e : m.training.history) history.push_back(json{e.epoch, num(e.train_mse), num(e.val_mse)});
  json h = header("checkpoint");
  h["spec"] = spec_json(m.spec);
  h["training"] = json{{"best_epoch", m.training.best_epoch},
                       {"best_val_mse", num(m.training.best_val_mse)},
                       {"epochs_run", m.training.epochs_run},
                       {"history", history}};
  h["blocks"] = w.index;
  write_text(path, h.dump() + "\n" + w.data);
}

model::TrainedModel load_checkpoint(const fs::path& path) {
  const std::string raw = read_text(path);
  const auto nl = raw.find('\n');
  if (nl == std::string::npos) fail(ErrorKind::IoFailure, path.string() + ": missing checkpoint header");
  const json h = parse_checked(raw.substr(0, nl), "checkpoint", path);

  return guarded(path, [&] {
    model::TrainedModel m;
    m.spec = spec_from(h.at("spec"));
    const json& t = h.at("training");
    m.training.best_epoch = t.at("best_epoch").get<int>();
    m.training.best_val_mse = num(t.at("best_val_mse"));
    m.training.epochs_run = t.at("epochs_run").get<int>();
    for (const auto& e : t.at("history")) m.training.history.push_back({e.at(0).get<int>(), num(e.at(1)), num(e.at(2))});

    std::map<std::string, Eigen::MatrixXd> blocks;
    std::vector<std::string> order;
    size_t pos = nl + 1;
    for (const auto& b : h.at("blocks")) {
      const auto rows = b.at("rows").get<Eigen::Index>(), cols = b.at("cols").get<Eigen::Index>();
      if (pos + static_cast<size_t>(rows * cols) * 8 > raw.size()) fail(ErrorKind::IoFailure, path.string() + ": truncated");
      Eigen::MatrixXd mat(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c, pos += 8) mat(r, c) = get_le(raw, pos);
      const auto name = b.at("name").get<std::string>();
      order.push_back(name);
      blocks[name] = std::move(mat);
    }
    if (pos != raw.size()) fail(ErrorKind::IoFailure, path.string() + ": trailing bytes");

    const auto take = [&](const std::string& name) -> const Eigen::MatrixXd& {
      const auto it = blocks.find(name);
      if (it == blocks.end()) fail(ErrorKind::IoFailure, path.string() + ": missing block " + name);
      return it->second;
    };
    const auto moments = [&](const std::string& prefix) {
      return Standardizer::Moments{take(prefix + ".mean"), take(prefix + ".scale")};
    };
    std::map<int, Standardizer::Moments> per_trial;
    const std::string trial_prefix = "features.trial.";
    for (const auto& name : order) {
      if (name.rfind(trial_prefix, 0) == 0 && name.ends_with(".mean")) {
        const auto id = name.substr(trial_prefix.size(), name.size() - trial_prefix.size() - 5);
        per_trial[std::stoi(id)] = moments(trial_prefix + id);
      }
    }
    m.features = Standardizer::from_moments(std::move(per_trial), moments("features.pooled"));
    const auto& tg = take("targets");
    m.targets.mean = {tg(0, 0), tg(0, 1)};
    m.targets.scale = {tg(1, 0), tg(1, 1)};

    if (model::is_linear(m.spec.arch)) {
      for (const auto& name : order) {
        if (name.rfind("linear.", 0) != 0 || !name.ends_with(".weights")) continue;
        const auto key = name.substr(7, name.size() - 7 - 8);
        const auto dot = key.find('.');
        const int trial = std::stoi(key.substr(0, dot)), flag = std::stoi(key.substr(dot + 1));
        model::LinearCoefficients coef;
        coef.weights = take(name);
        coef.intercept = take("linear." + key + ".intercept");
        m.linear[{trial, flag}] = std::move(coef);
      }
    } else {
      Rng rng(0);
      auto net = model::build_network(m.spec, rng);
      for (auto& p : net->params()) {
        const auto& value = take("net." + p.name);
        if (value.rows() != p.var.value().rows() || value.cols() != p.var.value().cols()) {
          fail(ErrorKind::ArchitectureMismatch, path.string() + ": parameter " + p.name + " has the wrong shape");
        }
        p.var.mutable_value() = value;
      }
      net->dropout_rate = m.spec.hp.dropout;
      m.network = std::move(net);
    }
    return m;
  });
}

model::TrainedModel load_checkpoint(const fs::path& path, const model::ModelSpec& expected) {
  auto m = load_checkpoint(path);
  if (!(m.spec == expected)) {
    fail(ErrorKind::ArchitectureMismatch, path.string() + ": stored " + std::string(model::to_string(m.spec.arch)) +
                                              " model does not match the requested " +
                                              std::string(model::to_string(expected.arch)) + " spec");
  }
  return m;
}

}  // namespace gaitscale::io
