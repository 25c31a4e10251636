#include <fstream>
#include <set>
#include <sstream>

#include "gaitscale/error.hpp"
#include "gaitscale/format.hpp"
#include "gaitscale/pipeline.hpp"
#include "json.hpp"

namespace gaitscale::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void invalid(const std::string& what) { fail(ErrorKind::ConfigInvalid, what); }

void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) invalid(where + " must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) invalid("unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    invalid(where + "." + key + " has the wrong type");
  }
}

json synth_json(const synth::SynthConfig& s) {
  return json{{"n_trials", s.n_trials},
              {"strides_per_trial", s.strides_per_trial},
              {"cadence_hz", s.cadence_hz},
              {"fs", s.fs},
              {"phi_star", s.phi_star},
              {"gain", s.gain},
              {"sigma_eps", s.sigma_eps},
              {"sigma_v", s.sigma_v},
              {"step_length", s.step_length},
              {"step_width", s.step_width},
              {"com_amplitude", s.com_amplitude},
              {"ramp_half_width", s.ramp_half_width},
              {"swing_fraction", s.swing_fraction},
              {"swing_height", s.swing_height},
              {"step_jitter_frames", s.step_jitter_frames},
              {"marker_noise", s.marker_noise},
              {"treadmill", s.treadmill},
              {"with_gaze", s.with_gaze},
              {"with_knees", s.with_knees},
              {"seed", s.seed}};
}

synth::SynthConfig synth_from(const json& j) {
  const std::string w = "synth";
  allow_keys(j, w,
             {"n_trials", "strides_per_trial", "cadence_hz", "fs", "phi_star", "gain", "sigma_eps", "sigma_v",
              "step_length", "step_width", "com_amplitude", "ramp_half_width", "swing_fraction", "swing_height",
              "step_jitter_frames", "marker_noise", "treadmill", "with_gaze", "with_knees", "seed"});
  synth::SynthConfig s;
  read(j, "n_trials", s.n_trials, w);
  read(j, "strides_per_trial", s.strides_per_trial, w);
  read(j, "cadence_hz", s.cadence_hz, w);
  read(j, "fs", s.fs, w);
  read(j, "phi_star", s.phi_star, w);
  read(j, "gain", s.gain, w);
  read(j, "sigma_eps", s.sigma_eps, w);
  read(j, "sigma_v", s.sigma_v, w);
  read(j, "step_length", s.step_length, w);
  read(j, "step_width", s.step_width, w);
  read(j, "com_amplitude", s.com_amplitude, w);
  read(j, "ramp_half_width", s.ramp_half_width, w);
  read(j, "swing_fraction", s.swing_fraction, w);
  read(j, "swing_height", s.swing_height, w);
  read(j, "step_jitter_frames", s.step_jitter_frames, w);
  read(j, "marker_noise", s.marker_noise, w);
  read(j, "treadmill", s.treadmill, w);
  read(j, "with_gaze", s.with_gaze, w);
  read(j, "with_knees", s.with_knees, w);
  read(j, "seed", s.seed, w);
  return s;
}

json preprocess_json(const PreprocessConfig& p) {
  return json{{"cutoff_hz", p.cutoff_hz},
              {"filter_order", p.filter_order},
              {"foot_markers", p.foot_markers},
              {"pelvis_markers", p.pelvis_markers},
              {"heel_strike",
               {{"min_separation_s", p.heel_strike.min_separation_s},
                {"prominence_fraction", p.heel_strike.prominence_fraction},
                {"min_duration_s", p.heel_strike.min_duration_s}}},
              {"rejection",
               {{"stance_lift_m", p.rejection.stance_lift_m},
                {"duration_low", p.rejection.duration_low},
                {"duration_high", p.rejection.duration_high}}}};
}

void preprocess_from(const json& j, PreprocessConfig& p) {
  const std::string w = "preprocess";
  allow_keys(j, w, {"cutoff_hz", "filter_order", "foot_markers", "pelvis_markers", "heel_strike", "rejection"});
  read(j, "cutoff_hz", p.cutoff_hz, w);
  read(j, "filter_order", p.filter_order, w);
  read(j, "foot_markers", p.foot_markers, w);
  read(j, "pelvis_markers", p.pelvis_markers, w);
  if (j.contains("heel_strike")) {
    const auto& h = j.at("heel_strike");
    allow_keys(h, w + ".heel_strike", {"min_separation_s", "prominence_fraction", "min_duration_s"});
    read(h, "min_separation_s", p.heel_strike.min_separation_s, w);
    read(h, "prominence_fraction", p.heel_strike.prominence_fraction, w);
    read(h, "min_duration_s", p.heel_strike.min_duration_s, w);
  }
  if (j.contains("rejection")) {
    const auto& r = j.at("rejection");
    allow_keys(r, w + ".rejection", {"stance_lift_m", "duration_low", "duration_high"});
    read(r, "stance_lift_m", p.rejection.stance_lift_m, w);
    read(r, "duration_low", p.rejection.duration_low, w);
    read(r, "duration_high", p.rejection.duration_high, w);
  }
}

json hp_json(const model::Hyperparams& hp) {
  return json{{"hidden_dim", hp.hidden_dim}, {"decay", hp.decay},       {"dropout", hp.dropout},
              {"kernel", hp.kernel},         {"dilation", hp.dilation}, {"num_layers", hp.num_layers},
              {"num_heads", hp.num_heads},   {"ff_dim", hp.ff_dim},     {"lambda", hp.lambda}};
}

void hp_from(const json& j, model::Hyperparams& hp) {
  const std::string w = "hyperparams";
  allow_keys(j, w, {"hidden_dim", "decay", "dropout", "kernel", "dilation", "num_layers", "num_heads", "ff_dim", "lambda"});
  read(j, "hidden_dim", hp.hidden_dim, w);
  read(j, "decay", hp.decay, w);
  read(j, "dropout", hp.dropout, w);
  read(j, "kernel", hp.kernel, w);
  read(j, "dilation", hp.dilation, w);
  read(j, "num_layers", hp.num_layers, w);
  read(j, "num_heads", hp.num_heads, w);
  read(j, "ff_dim", hp.ff_dim, w);
  read(j, "lambda", hp.lambda, w);
}

}  // namespace

std::vector<double> RunConfig::grid() const {
  if (!phases.empty()) return phases;
  std::vector<double> g;
  for (int i = 0; i < kPhaseCount; ++i) g.push_back(phase_value(i));
  return g;
}

void RunConfig::validate() const {
  if (run_id.empty() || run_id.find_first_of("/\\") != std::string::npos || run_id == "." || run_id == "..") {
    invalid("run_id must be a plain directory name");
  }
  if (context.empty() || context.find_first_of("/\\ ") != std::string::npos) invalid("context must be a plain label");
  if (synth.has_value() == !trials.empty()) invalid("exactly one of 'synth' and 'trials' must be given");
  if (synth) {
    try {
      synth->validate();
    } catch (const Error& e) {
      invalid(std::string("synth: ") + e.what());
    }
  }
  std::set<int> ids;
  for (const auto& t : trials) {
    if (!fs::is_regular_file(t.path)) invalid("trial file not found: " + t.path.string());
    if (!ids.insert(t.meta.id).second) invalid("duplicate trial id " + std::to_string(t.meta.id));
    if (t.meta.belt_speed < 0.0) invalid("negative belt speed for trial " + std::to_string(t.meta.id));
  }
  if (!ids.empty() && (*ids.begin() != 0 || *ids.rbegin() != static_cast<int>(ids.size()) - 1)) {
    invalid("trial ids must be 0..T-1");
  }
  if (modalities.empty()) invalid("no modalities");
  if (archs.empty()) invalid("no architectures");
  std::set<int> seen;
  for (double phi : phases) {
    int i = 0;
    try {
      i = phase_index(phi);
    } catch (const Error&) {
      invalid("phase " + format_double(phi) + " is not on the 0.05 grid");
    }
    if (!seen.insert(i).second) invalid("duplicate phase " + format_double(phi));
    if (!seen.empty() && i < *seen.rbegin()) invalid("phases must be increasing");
  }
  if (budget < 1) invalid("budget must be >= 1");
  if (jobs < 1) invalid("jobs must be >= 1");
  if (!(lowess.fraction > 0.0 && lowess.fraction <= 1.0) || lowess.iterations < 0) invalid("bad lowess options");
  if (!(onset.alpha > 0.0 && onset.alpha < 1.0)) invalid("onset.alpha must be in (0, 1)");
  try {
    train.validate();
  } catch (const Error& e) {
    invalid(std::string("train: ") + e.what());
  }
}

RunConfig parse_config(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    invalid(std::string("config is not valid JSON: ") + e.what());
  }
  const std::string w = "config";
  allow_keys(j, w,
             {"run_id", "context", "seed", "jobs", "out", "synth", "trials", "modalities", "baseline", "markers",
              "architectures", "phases", "preprocess", "bounds", "hyperparams", "train", "budget", "tune", "lowess", "onset",
              "checkpoints", "only"});
  RunConfig c;
  read(j, "run_id", c.run_id, w);
  read(j, "context", c.context, w);
  read(j, "seed", c.seed, w);
  read(j, "jobs", c.jobs, w);
  if (j.contains("out")) {
    std::string out;
    read(j, "out", out, w);
    c.out = fs::path(out).is_absolute() ? fs::path(out) : base_dir / out;
  }
  if (j.contains("synth")) {
    c.synth = synth_from(j.at("synth"));
    if (!j.at("synth").contains("seed")) c.synth->seed = c.seed;
    c.preprocess = synth::preprocess_config();
  }
  if (j.contains("trials")) {
    for (const auto& t : j.at("trials")) {
      allow_keys(t, "trials[]", {"path", "id", "belt_speed", "task", "terrain"});
      TrialSource src;
      std::string path, task = "treadmill_walk", terrain = "none";
      read(t, "path", path, "trials[]");
      read(t, "id", src.meta.id, "trials[]");
      read(t, "belt_speed", src.meta.belt_speed, "trials[]");
      read(t, "task", task, "trials[]");
      read(t, "terrain", terrain, "trials[]");
      if (path.empty()) invalid("trial entry without a path");
      src.path = fs::path(path).is_absolute() ? fs::path(path) : base_dir / path;
      try {
        src.meta.task = parse_task(task);
        src.meta.terrain = parse_terrain(terrain);
      } catch (const Error& e) {
        invalid(e.what());
      }
      c.trials.push_back(std::move(src));
    }
  }
  const auto parse_kind = [](const std::string& s) {
    try {
      return parse_modality(s);
    } catch (const Error& e) {
      invalid(e.what());
    }
  };
  if (j.contains("modalities")) {
    std::vector<std::string> names;
    read(j, "modalities", names, w);
    c.modalities.clear();
    for (const auto& n : names) c.modalities.push_back(parse_kind(n));
  }
  if (j.contains("baseline")) {
    std::string b;
    read(j, "baseline", b, w);
    c.baseline = parse_kind(b);
  }
  if (j.contains("markers")) {
    const auto& m = j.at("markers");
    allow_keys(m, "markers", {"com", "full_body", "swing", "include_velocity"});
    read(m, "com", c.modality_defaults.com_markers, "markers");
    read(m, "full_body", c.modality_defaults.full_body_markers, "markers");
    read(m, "swing", c.modality_defaults.swing_markers, "markers");
    read(m, "include_velocity", c.modality_defaults.include_velocity, "markers");
  }
  if (j.contains("architectures")) {
    std::vector<std::string> names;
    read(j, "architectures", names, w);
    c.archs.clear();
    for (const auto& n : names) {
      try {
        c.archs.push_back(model::parse_arch(n));
      } catch (const Error& e) {
        invalid(e.what());
      }
    }
  }
  read(j, "phases", c.phases, w);
  if (j.contains("preprocess")) preprocess_from(j.at("preprocess"), c.preprocess);
  if (j.contains("bounds")) {
    allow_keys(j.at("bounds"), "bounds", {"ml", "ap"});
    read(j.at("bounds"), "ml", c.bounds.ml, "bounds");
    read(j.at("bounds"), "ap", c.bounds.ap, "bounds");
  }
  if (j.contains("hyperparams")) hp_from(j.at("hyperparams"), c.hyperparams);
  if (j.contains("train")) {
    const auto& t = j.at("train");
    allow_keys(t, "train", {"max_epochs", "patience", "batch_size", "seed"});
    read(t, "max_epochs", c.train.max_epochs, "train");
    read(t, "patience", c.train.patience, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "seed", c.train.seed, "train");
  }
  read(j, "budget", c.budget, w);
  read(j, "tune", c.tune, w);
  if (j.contains("lowess")) {
    allow_keys(j.at("lowess"), "lowess", {"fraction", "iterations"});
    read(j.at("lowess"), "fraction", c.lowess.fraction, "lowess");
    read(j.at("lowess"), "iterations", c.lowess.iterations, "lowess");
  }
  if (j.contains("onset")) {
    allow_keys(j.at("onset"), "onset", {"threshold", "alpha"});
    read(j.at("onset"), "threshold", c.onset.threshold, "onset");
    read(j.at("onset"), "alpha", c.onset.alpha, "onset");
  }
  read(j, "checkpoints", c.checkpoints, w);
  if (j.contains("only")) {
    if (j.at("only").is_string()) {
      c.only = {j.at("only").get<std::string>()};
    } else {
      read(j, "only", c.only, w);
    }
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) invalid("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string config_json(const RunConfig& c) {
  json j;
  j["run_id"] = c.run_id;
  j["context"] = c.context;
  j["seed"] = c.seed;
  if (c.synth) j["synth"] = synth_json(*c.synth);
  if (!c.trials.empty()) {
    j["trials"] = json::array();
    for (const auto& t : c.trials) {
      j["trials"].push_back(json{{"path", t.path.string()},
                                 {"id", t.meta.id},
                                 {"belt_speed", t.meta.belt_speed},
                                 {"task", std::string(to_string(t.meta.task))},
                                 {"terrain", std::string(to_string(t.meta.terrain))}});
    }
  }
  j["modalities"] = json::array();
  for (auto m : c.modalities) j["modalities"].push_back(std::string(to_string(m)));
  j["baseline"] = std::string(to_string(c.baseline));
  j["markers"] = json{{"com", c.modality_defaults.com_markers},
                      {"full_body", c.modality_defaults.full_body_markers},
                      {"swing", c.modality_defaults.swing_markers},
                      {"include_velocity", c.modality_defaults.include_velocity}};
  j["architectures"] = json::array();
  for (auto a : c.archs) j["architectures"].push_back(std::string(model::to_string(a)));
  j["phases"] = c.grid();
  j["preprocess"] = preprocess_json(c.preprocess);
  j["bounds"] = json{{"ml", c.bounds.ml}, {"ap", c.bounds.ap}};
  j["hyperparams"] = hp_json(c.hyperparams);
  j["train"] = json{{"max_epochs", c.train.max_epochs},
                    {"patience", c.train.patience},
                    {"batch_size", c.train.batch_size},
                    {"seed", c.train.seed}};
  j["budget"] = c.budget;
  j["tune"] = c.tune;
  j["lowess"] = json{{"fraction", c.lowess.fraction}, {"iterations", c.lowess.iterations}};
  j["onset"] = json{{"threshold", c.onset.threshold}, {"alpha", c.onset.alpha}};
  j["checkpoints"] = c.checkpoints;
  j["only"] = c.only;
  return j.dump(1) + "\n";
}

Stage parse_stage(std::string_view name) {
  if (name == "ingest") return Stage::Ingest;
  if (name == "preprocess") return Stage::Preprocess;
  if (name == "train") return Stage::Train;
  if (name == "evaluate") return Stage::Evaluate;
  if (name == "timescales") return Stage::Timescales;
  if (name == "report") return Stage::Report;
  if (name == "all") return Stage::All;
  invalid("unknown stage '" + std::string(name) + "'");
}

bool matches_filter(const std::vector<std::string>& patterns, const std::string& triple) {
  if (patterns.empty()) return true;
  const auto parts = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string p;
    while (std::getline(ss, p, '/')) out.push_back(p);
    return out;
  };
  const auto t = parts(triple);
  for (const auto& pat : patterns) {
    const auto p = parts(pat);
    bool ok = p.size() <= t.size();
    for (size_t i = 0; ok && i < p.size(); ++i) ok = p[i] == "*" || p[i] == t[i];
    if (ok) return true;
  }
  return false;
}

}  // namespace gaitscale::pipeline
