#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gaitscale/crossval.hpp"
#include "gaitscale/synthgait.hpp"
#include "gaitscale/timescale.hpp"

namespace gaitscale::pipeline {

struct TrialSource {
  std::filesystem::path path;
  TrialMeta meta;
};

struct RunConfig {
  std::string run_id = "run";
  std::string context = "synthetic";
  std::optional<synth::SynthConfig> synth;
  std::vector<TrialSource> trials;
  std::vector<ModalityKind> modalities{ModalityKind::Com};
  ModalitySpec modality_defaults;  // marker sets shared by every modality
  ModalityKind baseline = ModalityKind::SwingFoot;
  std::vector<model::Arch> archs{model::Arch::LI2};
  std::vector<double> phases;  // empty: full 21-point grid
  PreprocessConfig preprocess;
  TargetBounds bounds;
  model::Hyperparams hyperparams;
  grad::TrainConfig train;
  int budget = 100;
  bool tune = true;
  cv::LowessOptions lowess;
  ts::OnsetOptions onset;
  bool checkpoints = true;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::filesystem::path out = "runs";
  std::vector<std::string> only;  // "context/modality/arch" patterns, '*' wildcards

  /// Throws ConfigInvalid.
  void validate() const;
  std::vector<double> grid() const;
  std::filesystem::path run_dir() const { return out / run_id; }
};

/// Parses the JSON config. Relative trial paths resolve against `base_dir`.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
/// Canonical JSON of a config (every field, defaults included).
std::string config_json(const RunConfig& config);

enum class Stage { Ingest, Preprocess, Train, Evaluate, Timescales, Report, All };

Stage parse_stage(std::string_view name);

/// True when `triple` ("context/modality/arch") matches a filter pattern, or there are none.
bool matches_filter(const std::vector<std::string>& patterns, const std::string& triple);

struct Failure {
  std::string triple;
  std::string what;
};

struct RunSummary {
  std::filesystem::path dir;
  std::vector<Failure> failures;
  int curves = 0;
  int score_tables = 0;
  int timescale_reports = 0;
  int checkpoints = 0;
  int plots = 0;
};

/// Runs every stage up to and including `stage`. A failing
/// (context, modality, architecture) triple is logged and skipped.
RunSummary run_pipeline(const RunConfig& config, Stage stage = Stage::All);

/// SVG plots of every curve in `run_dir`/curves. Throws MissingCurves.
int emit_plots(const std::filesystem::path& run_dir);

}  // namespace gaitscale::pipeline
