#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "gaitscale/artifact_io.hpp"
#include "gaitscale/error.hpp"
#include "gaitscale/pipeline.hpp"
#include "json.hpp"

namespace {

using namespace gaitscale;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::vector<std::string> only;
};

void add_common(CLI::App* cmd, Options& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "Run configuration (JSON)")->envname("GAITSCALE_CONFIG");
  if (config_required) c->required();
  cmd->add_option("--out", o.out, "Output root directory")->envname("GAITSCALE_OUT");
  cmd->add_option("--seed", o.seed, "Master seed")->envname("GAITSCALE_SEED");
  cmd->add_option("--jobs", o.jobs, "Worker threads")->envname("GAITSCALE_JOBS")->check(CLI::PositiveNumber);
  cmd->add_option("--only", o.only, "Triple filter context/modality/arch, '*' wildcards")
      ->envname("GAITSCALE_ONLY")
      ->delimiter(',');
}

pipeline::RunConfig resolve(const Options& o) {
  auto cfg = pipeline::load_config(o.config);
  if (!o.out.empty()) cfg.out = o.out;
  if (o.seed) {
    if (cfg.synth && cfg.synth->seed == cfg.seed) cfg.synth->seed = *o.seed;
    cfg.seed = *o.seed;
  }
  if (o.jobs) cfg.jobs = *o.jobs;
  if (!o.only.empty()) cfg.only = o.only;
  return cfg;
}

int run_stage(const Options& o, pipeline::Stage stage) {
  const auto cfg = resolve(o);
  const auto s = pipeline::run_pipeline(cfg, stage);
  std::cout << "run directory: " << s.dir.string() << "\n"
            << "curves: " << s.curves << ", score tables: " << s.score_tables
            << ", timescale reports: " << s.timescale_reports << ", checkpoints: " << s.checkpoints
            << ", plots: " << s.plots << "\n";
  for (const auto& f : s.failures) std::cerr << "failed " << f.triple << ": " << f.what << "\n";
  return s.failures.empty() ? 0 : 1;
}

int run_synth(const Options& o) {
  synth::SynthConfig sc;
  if (!o.config.empty()) {
    const auto cfg = pipeline::load_config(o.config);
    if (!cfg.synth) fail(ErrorKind::ConfigInvalid, o.config + " has no 'synth' block");
    sc = *cfg.synth;
  }
  if (o.seed) sc.seed = *o.seed;
  try {
    sc.validate();
  } catch (const Error& e) {
    fail(ErrorKind::ConfigInvalid, e.what());
  }
  const std::filesystem::path dir = o.out.empty() ? std::filesystem::path("synthetic") : std::filesystem::path(o.out);
  const auto out = synth::generate(sc);
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : out.dataset.trials) {
    const auto name = "trial_" + std::to_string(t.id) + ".csv";
    std::filesystem::create_directories(dir);
    save_trial(t, dir / name);
    trials.push_back({{"path", name}, {"id", t.id}, {"belt_speed", t.belt_speed}, {"task", "treadmill_walk"}});
  }
  synth::write_sidecars(out, dir);
  io::write_text(dir / "trials.json", nlohmann::json{{"trials", trials}}.dump(1) + "\n");
  std::cout << "wrote " << out.dataset.trials.size() << " trials to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Foot-placement predictability and timescale analysis"};
  app.require_subcommand(1);
  Options o;
  struct Cmd {
    const char* name;
    const char* help;
    pipeline::Stage stage;
  };
  const Cmd stages[] = {
      {"ingest", "Load or generate trials and write the dataset summary", pipeline::Stage::Ingest},
      {"preprocess", "Ingest, then filter, detect heel strikes and reject cycles", pipeline::Stage::Preprocess},
      {"train", "Fit one checkpoint per (modality, architecture, phase)", pipeline::Stage::Train},
      {"evaluate", "Nested cross-validation curves and model scores", pipeline::Stage::Evaluate},
      {"timescales", "Evaluate, then compute timescale reports", pipeline::Stage::Timescales},
      {"report", "Render plots from an existing run directory", pipeline::Stage::Report},
      {"all", "Every stage, including checkpoints and plots", pipeline::Stage::All},
  };
  std::vector<std::pair<CLI::App*, pipeline::Stage>> subs;
  for (const auto& c : stages) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, o, true);
    subs.emplace_back(sub, c.stage);
  }
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset as trial files");
  add_common(synth_cmd, o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    if (synth_cmd->parsed()) return run_synth(o);
    for (const auto& [sub, stage] : subs) {
      if (sub->parsed()) return run_stage(o, stage);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::ConfigInvalid ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
