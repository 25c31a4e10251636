#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "gaitscale/pipeline.hpp"
#include "support/expect_error.hpp"

using namespace gaitscale;
using namespace gaitscale::pipeline;
using gaitscale::testing::thrown_kind;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "gaitscale_pipeline_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).generic_string()] = read_all(e.path());
  }
  return files;
}

RunConfig small_config(const fs::path& out, const std::string& extra = "") {
  const std::string text = R"({"run_id": "r", "seed": 3,
    "synth": {"n_trials": 5, "strides_per_trial": 30},
    "modalities": ["com"], "architectures": ["LI2"], "phases": [0.0, 0.5, 1.0])" +
                           extra + "}";
  auto cfg = parse_config(text);
  cfg.out = out;
  return cfg;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("synthetic LI2 run writes every artifact") {
    const auto out = scratch("counts");
    const auto cfg = small_config(out);
    const auto s = run_pipeline(cfg);
    CHECK(s.failures.empty());
    CHECK(s.curves == 2);  // com and the auto-added swing_foot baseline
    CHECK(s.score_tables == 1);
    CHECK(s.timescale_reports == 1);  // baseline has no report of its own
    CHECK(s.checkpoints == 6);
    CHECK(s.plots == 2);
    const auto dir = cfg.run_dir();
    CHECK(fs::exists(dir / "config.json"));
    CHECK(fs::exists(dir / "scores" / "scores.csv"));
    CHECK(fs::exists(dir / "timescales" / "summary.csv"));
    CHECK(fs::exists(dir / "curves" / "synthetic__com__LI2.json"));
    CHECK(read_all(dir / "failures.txt").empty());
  }

  TEST_CASE("rerun with the same seed is byte-identical, serial or parallel") {
    const auto a = small_config(scratch("det_a"));
    auto b = small_config(scratch("det_b"));
    b.jobs = 3;
    run_pipeline(a);
    run_pipeline(b);
    const auto sa = snapshot(a.run_dir()), sb = snapshot(b.run_dir());
    REQUIRE(sa.size() == sb.size());
    for (const auto& [name, bytes] : sa) {
      INFO(name);
      REQUIRE(sb.count(name) == 1);
      CHECK(bytes == sb.at(name));
    }
  }

  TEST_CASE("a different seed changes the data") {
    const auto a = small_config(scratch("seed_a"));
    auto b = small_config(scratch("seed_b"));
    b.seed = 4;
    b.synth->seed = 4;
    run_pipeline(a, Stage::Ingest);
    run_pipeline(b, Stage::Ingest);
    CHECK(read_all(a.run_dir() / "data" / "trial_0.csv") != read_all(b.run_dir() / "data" / "trial_0.csv"));
  }

  TEST_CASE("missing trial file is a config error naming the path") {
    const std::string text = R"({"trials": [{"path": "nowhere/trial.csv", "id": 0}]})";
    try {
      parse_config(text, "/tmp").validate();
      FAIL("expected ConfigInvalid");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ConfigInvalid);
      CHECK(std::string(e.what()).find("nowhere/trial.csv") != std::string::npos);
    }
  }

  TEST_CASE("config parse errors") {
    CHECK(thrown_kind([] { parse_config("{not json"); }) == ErrorKind::ConfigInvalid);
    CHECK(thrown_kind([] { parse_config(R"({"synth": {}, "bogus": 1})"); }) == ErrorKind::ConfigInvalid);
    CHECK(thrown_kind([] { parse_config(R"({"synth": {}, "architectures": ["XYZ"]})"); }) ==
          ErrorKind::ConfigInvalid);
    CHECK(thrown_kind([] { parse_config(R"({"synth": {}, "phases": [0.33]})").validate(); }) ==
          ErrorKind::ConfigInvalid);
    CHECK(thrown_kind([] { parse_config("{}").validate(); }) == ErrorKind::ConfigInvalid);
    CHECK(parse_config(R"({"synth": {}})").grid().size() == 21);
  }

  TEST_CASE("config JSON round trip") {
    const auto cfg = small_config("x", R"(, "budget": 7, "tune": false)");
    const auto again = parse_config(config_json(cfg));
    CHECK(config_json(again) == config_json(cfg));
    CHECK(again.budget == 7);
    CHECK_FALSE(again.tune);
  }

  TEST_CASE("stage names") {
    CHECK(parse_stage("all") == Stage::All);
    CHECK(parse_stage("timescales") == Stage::Timescales);
    CHECK(thrown_kind([] { parse_stage("plot"); }).has_value());
  }

  TEST_CASE("triple filter") {
    CHECK(matches_filter({}, "synthetic/com/LI2"));
    CHECK(matches_filter({"synthetic/com/LI2"}, "synthetic/com/LI2"));
    CHECK(matches_filter({"*/com/*"}, "synthetic/com/GRU"));
    CHECK_FALSE(matches_filter({"*/com/*"}, "synthetic/gaze/GRU"));
    CHECK(matches_filter({"x/y/z", "*/*/LI2"}, "lab/gaze/LI2"));
    CHECK(matches_filter({"lab"}, "lab/gaze/LI2"));
    CHECK_FALSE(matches_filter({"synthetic/com/LI"}, "synthetic/com/LI2"));
  }

  TEST_CASE("plots are deterministic and mark a missing onset") {
    const auto cfg = small_config(scratch("plots"), R"(, "onset": {"threshold": 5.0})");
    run_pipeline(cfg);
    const auto svg = cfg.run_dir() / "plots" / "synthetic__com__LI2.svg";
    const auto first = read_all(svg);
    CHECK(first.find("<svg") != std::string::npos);
    CHECK(first.find("n.s.") != std::string::npos);
    CHECK(emit_plots(cfg.run_dir()) == 2);
    CHECK(read_all(svg) == first);
  }

  TEST_CASE("plots need curves") {
    const auto dir = scratch("empty");
    CHECK(thrown_kind([&] { emit_plots(dir); }) == ErrorKind::MissingCurves);
  }
}
