#include "gaitscale/pipeline.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "gaitscale/artifact_io.hpp"
#include "gaitscale/error.hpp"
#include "gaitscale/format.hpp"
#include "gaitscale/parallel.hpp"
#include "json.hpp"

namespace gaitscale::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using model::Arch;

std::string stem(const std::string& context, ModalityKind m, Arch a) {
  return context + "__" + std::string(to_string(m)) + "__" + std::string(model::to_string(a));
}

std::string triple(const std::string& context, ModalityKind m, Arch a) {
  return context + "/" + std::string(to_string(m)) + "/" + std::string(model::to_string(a));
}

std::string phase_tag(double phi) {
  const int pct = static_cast<int>(std::lround(phi * 100.0));
  std::string s = std::to_string(pct);
  return "phi" + std::string(3 - std::min<size_t>(3, s.size()), '0') + s;
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json opt_num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

struct Run {
  const RunConfig& cfg;
  fs::path dir;
  std::vector<double> grid;
  Dataset dataset;
  std::vector<ProcessedTrial> processed;
  std::vector<ModalityKind> evaluated;                          // configured, then baseline
  std::map<std::pair<ModalityKind, int>, std::vector<Sample>> samples;  // (modality, grid index)
  std::map<std::pair<ModalityKind, Arch>, cv::EvalCurve> curves;
  std::map<std::pair<ModalityKind, Arch>, std::vector<cv::PhaseResult>> results;
  RunSummary summary;

  void failed(const std::string& what_triple, const std::string& what) { summary.failures.push_back({what_triple, what}); }
  bool selected(ModalityKind m, Arch a) const { return matches_filter(cfg.only, triple(cfg.context, m, a)); }
  bool is_baseline_only(ModalityKind m) const {
    return m == cfg.baseline && std::find(cfg.modalities.begin(), cfg.modalities.end(), m) == cfg.modalities.end();
  }
};

void ingest(Run& run) {
  const auto data = run.dir / "data";
  fs::create_directories(data);
  if (run.cfg.synth) {
    auto out = synth::generate(*run.cfg.synth);
    for (const auto& t : out.dataset.trials) save_trial(t, data / ("trial_" + std::to_string(t.id) + ".csv"));
    synth::write_sidecars(out, data);
    const auto ceiling = synth::analytic_ceiling(*run.cfg.synth, out);
    json c{{"r2_max", {num(ceiling.r2_max[0]), num(ceiling.r2_max[1])}},
           {"offset_only", {num(ceiling.offset_only[0]), num(ceiling.offset_only[1])}},
           {"target_variance", {num(ceiling.target_variance[0]), num(ceiling.target_variance[1])}}};
    io::write_text(data / "ceiling.json", c.dump(1) + "\n");
    run.dataset = std::move(out.dataset);
  } else {
    for (const auto& src : run.cfg.trials) run.dataset.trials.push_back(load_trial(src.path, src.meta));
    std::sort(run.dataset.trials.begin(), run.dataset.trials.end(),
              [](const Trial& a, const Trial& b) { return a.id < b.id; });
  }
  run.dataset.context = run.cfg.context;
  run.dataset.validate();

  json d{{"context", run.dataset.context}, {"trials", json::array()}};
  for (const auto& t : run.dataset.trials) {
    json markers = json::array();
    for (const auto& [name, tr] : t.markers) markers.push_back(name);
    d["trials"].push_back(json{{"id", t.id},
                               {"frames", t.frames()},
                               {"fs", t.fs},
                               {"belt_speed", t.belt_speed},
                               {"task", std::string(to_string(t.task))},
                               {"terrain", std::string(to_string(t.terrain))},
                               {"markers", markers},
                               {"gaze", t.gaze.has_value()}});
  }
  io::write_text(data / "dataset.json", d.dump(1) + "\n");
}

void preprocess(Run& run) {
  const auto& trials = run.dataset.trials;
  run.processed.resize(trials.size());
  parallel_for(static_cast<int>(trials.size()), run.cfg.jobs,
               [&](int i) { run.processed[i] = preprocess_trial(trials[i], run.cfg.preprocess); });
  const auto dir = run.dir / "preprocess";
  json summary = json::array();
  for (const auto& p : run.processed) {
    const auto id = std::to_string(p.series.id);
    io::write_text(dir / ("trial_" + id + "_rejections.csv"), rejection_log_csv(p.rejections));
    std::string events = "foot,frame,time\n";
    for (const auto& e : p.events) {
      events += std::string(to_string(e.foot)) + "," + std::to_string(e.frame) + "," + format_double(e.time) + "\n";
    }
    io::write_text(dir / ("trial_" + id + "_events.csv"), events);
    const auto valid = std::count_if(p.cycles.begin(), p.cycles.end(), [](const GaitCycle& c) { return c.valid; });
    summary.push_back(json{{"id", p.series.id},
                           {"events", p.events.size()},
                           {"cycles", p.cycles.size()},
                           {"valid_cycles", valid},
                           {"rejected", p.rejections.size()}});
  }
  io::write_text(dir / "summary.json", summary.dump(1) + "\n");
}

void build_all_samples(Run& run) {
  for (auto m : run.cfg.modalities) run.evaluated.push_back(m);
  const bool has_target = std::any_of(run.cfg.modalities.begin(), run.cfg.modalities.end(),
                                      [&](ModalityKind m) { return m != run.cfg.baseline; });
  if (has_target && std::find(run.evaluated.begin(), run.evaluated.end(), run.cfg.baseline) == run.evaluated.end()) {
    run.evaluated.push_back(run.cfg.baseline);
  }
  for (auto m : run.evaluated) {
    ModalitySpec spec = run.cfg.modality_defaults;
    spec.kind = m;
    json report = json::array();
    for (size_t i = 0; i < run.grid.size(); ++i) {
      SamplingReport rep;
      try {
        run.samples[{m, static_cast<int>(i)}] = build_samples(run.processed, spec, run.grid[i], run.cfg.bounds, &rep);
      } catch (const Error& e) {
        for (auto a : run.cfg.archs) {
          if (run.selected(m, a)) run.failed(triple(run.cfg.context, m, a), "sampling at " + format_double(run.grid[i]) + ": " + e.what());
        }
        run.samples.erase({m, static_cast<int>(i)});
      }
      report.push_back(json{{"phase", run.grid[i]},
                            {"candidates", rep.candidates},
                            {"insufficient_history", rep.insufficient_history},
                            {"touches_rejected", rep.touches_rejected},
                            {"out_of_bounds", rep.out_of_bounds},
                            {"emitted", rep.emitted}});
    }
    io::write_text(run.dir / "samples" / (std::string(to_string(m)) + ".json"), report.dump(1) + "\n");
  }
}

const std::vector<Sample>& samples_at(const Run& run, ModalityKind m, size_t i) {
  const auto it = run.samples.find({m, static_cast<int>(i)});
  if (it == run.samples.end()) fail(ErrorKind::InsufficientHistory, "no samples at phase " + format_double(run.grid[i]));
  return it->second;
}

void train_checkpoints(Run& run) {
  for (auto m : run.evaluated) {
    for (auto a : run.cfg.archs) {
      if (!run.selected(m, a)) continue;
      const auto name = triple(run.cfg.context, m, a);
      try {
        for (size_t i = 0; i < run.grid.size(); ++i) {
          const auto& samples = samples_at(run, m, i);
          model::ModelSpec spec{a, run.cfg.hyperparams, static_cast<int>(samples.front().S.rows()),
                                static_cast<int>(samples.front().S.cols()), 0};
          for (const auto& s : samples) spec.trials = std::max(spec.trials, s.trial + 1);
          std::vector<int> idx(samples.size());
          std::iota(idx.begin(), idx.end(), 0);
          Rng rng(derive_seed(run.cfg.seed, {0x66696e616c, i}));
          std::shuffle(idx.begin(), idx.end(), rng);
          const size_t n_val = std::max<size_t>(1, idx.size() / 5);
          std::vector<Sample> train, val;
          for (size_t k = 0; k < idx.size(); ++k) (k < idx.size() - n_val ? train : val).push_back(samples[idx[k]]);
          auto tc = run.cfg.train;
          tc.seed = derive_seed(run.cfg.seed, {0x66696e616c, i, 1});
          const auto fitted = model::fit_model(spec, train, val, tc);
          io::save_checkpoint(fitted, run.dir / "checkpoints" / (stem(run.cfg.context, m, a) + "__" + phase_tag(run.grid[i]) + ".ckpt"));
          ++run.summary.checkpoints;
        }
      } catch (const Error& e) {
        run.failed(name, std::string("train: ") + e.what());
      }
    }
  }
}

std::string curve_csv(const std::string& context, ModalityKind m, Arch a, const cv::EvalCurve& c) {
  std::string s = "context,modality,arch,axis,phase,r2,rmse,smoothed_r2,rmse_pooled\n";
  for (int axis = 0; axis < 2; ++axis) {
    for (size_t i = 0; i < c.phases.size(); ++i) {
      s += context + "," + std::string(to_string(m)) + "," + std::string(model::to_string(a)) + "," +
           (axis == 0 ? "ml" : "ap") + "," + format_double(c.phases[i]) + "," + format_double(c.r2[axis][i]) + "," +
           format_double(c.rmse[axis][i]) + "," +
           (c.smoothed[axis].empty() ? std::string() : format_double(c.smoothed[axis][i])) + "," +
           format_double(c.rmse_pooled[i]) + "\n";
    }
  }
  return s;
}

void evaluate(Run& run) {
  for (auto m : run.evaluated) {
    for (auto a : run.cfg.archs) {
      if (!run.selected(m, a)) continue;
      const auto name = triple(run.cfg.context, m, a);
      try {
        std::vector<cv::PhaseResult> results;
        std::string hyper = "phase,fold,hyperparams\n";
        for (size_t i = 0; i < run.grid.size(); ++i) {
          const auto& samples = samples_at(run, m, i);
          const auto plan = cv::make_fold_plan(static_cast<int>(samples.size()), derive_seed(run.cfg.seed, {0x706c616e, i}));
          cv::CvOptions opt;
          opt.train = run.cfg.train;
          opt.budget = run.cfg.budget;
          opt.tune = run.cfg.tune;
          opt.jobs = run.cfg.jobs;
          opt.seed = derive_seed(run.cfg.seed, {0x6576616c, i});
          auto r = cv::nested_cv_evaluate(samples, a, run.cfg.hyperparams, plan, opt);
          r.phi = run.grid[i];
          for (size_t k = 0; k < r.selected.size(); ++k) {
            hyper += format_double(r.phi) + "," + std::to_string(k) + ",\"" + r.selected[k].describe(a) + "\"\n";
          }
          results.push_back(std::move(r));
        }
        const auto curve = cv::assemble_curve(results, run.cfg.lowess);
        const auto base = run.dir / "curves" / stem(run.cfg.context, m, a);
        io::save_report(curve, base.string() + ".json");
        io::write_text(base.string() + ".csv", curve_csv(run.cfg.context, m, a, curve));
        io::write_text(base.string() + ".hyperparams.csv", hyper);
        run.curves[{m, a}] = curve;
        run.results[{m, a}] = std::move(results);
        ++run.summary.curves;
      } catch (const Error& e) {
        run.failed(name, std::string("evaluate: ") + e.what());
      }
    }
  }
}

std::vector<double> pointwise_min(const std::vector<const std::vector<double>*>& curves) {
  std::vector<double> out(*curves.front());
  for (const auto* c : curves)
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], (*c)[i]);
  return out;
}

double critical(const Run& run) {
  std::vector<const std::vector<double>*> best, base;
  for (const auto& [key, c] : run.curves) {
    if (key.first == run.cfg.baseline) {
      base.push_back(&c.rmse_pooled);
    } else {
      best.push_back(&c.rmse_pooled);
    }
  }
  if (best.empty() || base.empty()) return run.grid.back();
  return cv::critical_phase(run.grid, pointwise_min(best), pointwise_min(base));
}

void scores(Run& run, double c) {
  std::string table = "context,modality,arch,score,normalized,band\n";
  for (auto m : run.cfg.modalities) {
    std::map<std::string, std::vector<double>> rmse;
    for (auto a : run.cfg.archs) {
      const auto it = run.curves.find({m, a});
      if (it != run.curves.end()) rmse[std::string(model::to_string(a))] = it->second.rmse_pooled;
    }
    if (rmse.empty()) continue;
    try {
      const auto s = cv::model_score(rmse, run.grid, c);
      io::save_report(s, run.dir / "scores" / (run.cfg.context + "__" + std::string(to_string(m)) + ".json"));
      for (size_t i = 0; i < s.models.size(); ++i) {
        table += run.cfg.context + "," + std::string(to_string(m)) + "," + s.models[i] + "," + format_double(s.score[i]) +
                 "," + format_double(s.normalized[i]) + "," + std::string(cv::score_band(s.normalized[i])) + "\n";
      }
      ++run.summary.score_tables;
    } catch (const Error& e) {
      run.failed(run.cfg.context + "/" + std::string(to_string(m)) + "/*", std::string("score: ") + e.what());
    }
  }
  io::write_text(run.dir / "scores" / "scores.csv", table);
}

/// Mean striking-foot fore-aft velocity over each valid cycle, on the 21-point grid.
std::vector<double> swing_profile(const RunConfig& cfg, std::span<const ProcessedTrial> trials) {
  std::vector<double> sum(kPhaseCount, 0.0);
  int count = 0;
  for (const auto& p : trials) {
    for (const auto& cyc : p.cycles) {
      if (!cyc.valid) continue;
      const auto& marker = cfg.preprocess.foot_markers[cyc.foot == Foot::Left ? 0 : 1];
      const int col = p.layout.column(marker, 1, true);
      for (int k = 0; k < kPhaseCount - 1; ++k) sum[k] += cyc.phases(k, col);
      sum[kPhaseCount - 1] += cyc.terminal(col);
      ++count;
    }
  }
  if (count == 0) fail(ErrorKind::NoPeak, "no valid cycles for a swing profile");
  for (double& v : sum) v /= count;
  return sum;
}

std::optional<double> swing_start(const RunConfig& cfg, std::span<const ProcessedTrial> trials) {
  std::vector<double> full;
  for (int i = 0; i < kPhaseCount; ++i) full.push_back(phase_value(i));
  try {
    return ts::swing_initiation(full, swing_profile(cfg, trials));
  } catch (const Error&) {
    return std::nullopt;
  }
}

void fp_vs_swing(Run& run, Arch a) {
  const auto it = run.results.find({run.cfg.baseline, a});
  if (it == run.results.end()) return;
  const int n_trials = static_cast<int>(run.processed.size());
  json out{{"context", run.cfg.context}, {"modality", std::string(to_string(run.cfg.baseline))},
           {"arch", std::string(model::to_string(a))}};
  json per_trial = json::array();
  std::array<std::vector<double>, 2> fp, sw;
  for (int t = 0; t < n_trials; ++t) {
    const auto si = swing_start(run.cfg, std::span(run.processed).subspan(static_cast<size_t>(t), 1));
    std::array<std::vector<double>, 2> r2;
    bool ok = si.has_value();
    for (size_t i = 0; ok && i < run.grid.size(); ++i) {
      const auto& samples = samples_at(run, run.cfg.baseline, i);
      const auto& pred = it->second[i].predictions;
      std::vector<Eigen::Index> rows;
      for (size_t s = 0; s < samples.size(); ++s)
        if (samples[s].trial == run.processed[t].series.id) rows.push_back(static_cast<Eigen::Index>(s));
      if (rows.size() < 2) {
        ok = false;
        break;
      }
      Eigen::MatrixXd p(rows.size(), 2), y(rows.size(), 2);
      for (size_t r = 0; r < rows.size(); ++r) {
        p.row(r) = pred.row(rows[r]);
        y.row(r) << samples[rows[r]].y.ml, samples[rows[r]].y.ap;
      }
      try {
        const auto mt = cv::metrics(p, y);
        for (int axis = 0; axis < 2; ++axis) r2[axis].push_back(mt.r2[axis]);
      } catch (const Error&) {
        ok = false;
      }
    }
    json row{{"trial", run.processed[t].series.id}, {"swing_initiation", opt_num(si)}};
    if (ok) {
      for (int axis = 0; axis < 2; ++axis) {
        const auto curve = run.grid.size() >= 5 ? cv::lowess(run.grid, r2[axis], run.cfg.lowess).values : r2[axis];
        const double b = ts::breakpoint(run.grid, curve);
        fp[axis].push_back(b);
        sw[axis].push_back(*si);
        row[axis == 0 ? "fp_timing_ml" : "fp_timing_ap"] = b;
      }
    }
    per_trial.push_back(row);
  }
  out["per_trial"] = per_trial;
  for (int axis = 0; axis < 2; ++axis) {
    const char* key = axis == 0 ? "ml" : "ap";
    try {
      const auto cmp = ts::compare_onset_vs_swing(fp[axis], sw[axis]);
      out[key] = json{{"n", fp[axis].size()}, {"statistic", num(cmp.test.statistic)}, {"p", num(cmp.test.p_value)},
                      {"method", cmp.test.method == stats::TestMethod::Exact ? "exact" : "approx"}, {"stars", cmp.stars}};
    } catch (const Error& e) {
      out[key] = json{{"n", fp[axis].size()}, {"skipped", e.what()}};
    }
  }
  io::write_text(run.dir / "timescales" / (stem(run.cfg.context, run.cfg.baseline, a) + "__fp_vs_swing.json"),
                 out.dump(1) + "\n");
}

void timescales(Run& run, double c) {
  const auto swing = swing_start(run.cfg, run.processed);
  std::string table = "context,modality,arch,axis,intercept,peak_phase,peak_value,onset,breakpoint,breakpoint_raw,swing_initiation,critical\n";
  const auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("none"); };
  for (auto m : run.cfg.modalities) {
    if (m == run.cfg.baseline) continue;
    for (auto a : run.cfg.archs) {
      const auto mc = run.curves.find({m, a});
      const auto bc = run.curves.find({run.cfg.baseline, a});
      if (mc == run.curves.end() || bc == run.curves.end()) continue;
      try {
        std::vector<ts::TimescaleReport> reps;
        for (int axis = 0; axis < 2; ++axis) {
          auto rep = ts::analyze(std::string(to_string(m)), axis, mc->second, bc->second, run.cfg.onset);
          rep.critical = c;
          rep.swing_initiation = swing;
          table += run.cfg.context + "," + rep.modality + "," + std::string(model::to_string(a)) + "," +
                   (axis == 0 ? "ml" : "ap") + "," + format_double(rep.intercept) + "," + format_double(rep.peak.phase) +
                   "," + format_double(rep.peak.value) + "," + opt(rep.onset) + "," + format_double(rep.breakpoint) +
                   "," + format_double(rep.breakpoint_raw) + "," + opt(rep.swing_initiation) + "," + format_double(c) +
                   "\n";
          reps.push_back(std::move(rep));
        }
        io::save_report(reps, run.dir / "timescales" / (stem(run.cfg.context, m, a) + ".json"));
        ++run.summary.timescale_reports;
      } catch (const Error& e) {
        run.failed(triple(run.cfg.context, m, a), std::string("timescales: ") + e.what());
      }
    }
  }
  io::write_text(run.dir / "timescales" / "summary.csv", table);
  if (std::any_of(run.cfg.modalities.begin(), run.cfg.modalities.end(), [&](auto m) { return m != run.cfg.baseline; })) {
    for (auto a : run.cfg.archs) fp_vs_swing(run, a);
  }
}

void write_failures(const Run& run) {
  std::string s;
  for (const auto& f : run.summary.failures) s += f.triple + "\t" + f.what + "\n";
  io::write_text(run.dir / "failures.txt", s);
}

}  // namespace

RunSummary run_pipeline(const RunConfig& config, Stage stage) {
  config.validate();
  Run run{config, config.run_dir(), config.grid(), {}, {}, {}, {}, {}, {}, {}};
  run.summary.dir = run.dir;
  fs::create_directories(run.dir);

  if (stage == Stage::Report) {
    run.summary.plots = emit_plots(run.dir);
    return run.summary;
  }
  io::write_text(run.dir / "config.json", config_json(config));
  ingest(run);
  if (stage == Stage::Ingest) return run.summary;
  preprocess(run);
  if (stage == Stage::Preprocess) return run.summary;
  build_all_samples(run);
  if (stage == Stage::Train || (stage == Stage::All && config.checkpoints)) train_checkpoints(run);
  if (stage == Stage::Train) {
    write_failures(run);
    return run.summary;
  }
  evaluate(run);
  const double c = critical(run);
  scores(run, c);
  if (stage != Stage::Evaluate) timescales(run, c);
  write_failures(run);
  if (stage == Stage::All && run.summary.curves > 0) run.summary.plots = emit_plots(run.dir);
  return run.summary;
}

}  // namespace gaitscale::pipeline
