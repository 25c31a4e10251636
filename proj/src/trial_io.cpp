#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "gaitscale/error.hpp"
#include "gaitscale/format.hpp"
#include "gaitscale/trial.hpp"

namespace gaitscale {

std::string_view to_string(Task t) {
  switch (t) {
    case Task::TreadmillWalk: return "treadmill_walk";
    case Task::TreadmillRun: return "treadmill_run";
    case Task::OvergroundWalk: return "overground_walk";
  }
  return "?";
}

std::string_view to_string(Terrain t) {
  switch (t) {
    case Terrain::None: return "none";
    case Terrain::Even: return "even";
    case Terrain::Uneven: return "uneven";
    case Terrain::Flat: return "flat";
    case Terrain::Medium: return "medium";
    case Terrain::Rough: return "rough";
  }
  return "?";
}

Task parse_task(std::string_view s) {
  for (Task t : {Task::TreadmillWalk, Task::TreadmillRun, Task::OvergroundWalk}) {
    if (to_string(t) == s) return t;
  }
  fail(ErrorKind::InvalidConfig, "unknown task '" + std::string(s) + "'");
}

Terrain parse_terrain(std::string_view s) {
  for (Terrain t : {Terrain::None, Terrain::Even, Terrain::Uneven, Terrain::Flat, Terrain::Medium,
                    Terrain::Rough}) {
    if (to_string(t) == s) return t;
  }
  fail(ErrorKind::InvalidConfig, "unknown terrain '" + std::string(s) + "'");
}

void Trial::validate() const {
  if (!(fs > 0.0)) fail(ErrorKind::InvalidTrial, "trial " + std::to_string(id) + ": fs must be positive");
  if (belt_speed < 0.0) fail(ErrorKind::InvalidTrial, "trial " + std::to_string(id) + ": negative belt speed");
  for (const auto& [name, tr] : markers) {
    if (tr.x.size() != frames() || tr.y.size() != frames() || tr.z.size() != frames()) {
      fail(ErrorKind::InvalidTrial, "trial " + std::to_string(id) + ": marker '" + name + "' length differs");
    }
  }
  if (gaze && (gaze->x.size() != frames() || gaze->y.size() != frames())) {
    fail(ErrorKind::InvalidTrial, "trial " + std::to_string(id) + ": gaze length differs");
  }
}

void Dataset::validate() const {
  if (trials.empty()) fail(ErrorKind::InvalidTrial, "dataset '" + context + "' has no trials");
  for (size_t i = 0; i < trials.size(); ++i) {
    if (trials[i].id != static_cast<int>(i)) {
      fail(ErrorKind::InvalidTrial, "dataset '" + context + "': trial ids must be 0..T-1 in order");
    }
    trials[i].validate();
  }
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  for (;;) {
    const size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.remove_suffix(1);
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    out.push_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view cell, size_t row, const std::filesystem::path& path) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    fail(ErrorKind::IoFailure, path.string() + ": bad number '" + std::string(cell) + "' on row " +
                                   std::to_string(row));
  }
  return v;
}

}  // namespace

Trial load_trial(const std::filesystem::path& path, const TrialMeta& meta) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line) || header_line.find_first_not_of(" \r\t") == std::string::npos) {
    fail(ErrorKind::EmptyFile, path.string());
  }
  const std::vector<std::string_view> header = split(header_line);
  if (header.empty() || header[0] != "time") fail(ErrorKind::MissingColumn, path.string() + ": first column must be 'time'");

  // Column role: -1 time, -2 gaze_x, -3 gaze_y, otherwise index into targets.
  struct Target {
    std::string marker;
    int axis;
  };
  std::vector<Target> targets;
  std::vector<int> role(header.size(), 0);
  std::map<std::string, std::set<int>> seen;
  int gaze_cols = 0;
  role[0] = -1;
  for (size_t c = 1; c < header.size(); ++c) {
    const std::string_view h = header[c];
    if (h == "gaze_x" || h == "gaze_y") {
      role[c] = h == "gaze_x" ? -2 : -3;
      gaze_cols |= h == "gaze_x" ? 1 : 2;
      continue;
    }
    const size_t us = h.rfind('_');
    if (us == std::string_view::npos || us == 0 || us + 2 != h.size() ||
        (h[us + 1] != 'x' && h[us + 1] != 'y' && h[us + 1] != 'z')) {
      fail(ErrorKind::MissingColumn, path.string() + ": column '" + std::string(h) + "' is not <marker>_<axis>");
    }
    const int axis = h[us + 1] - 'x';
    const std::string marker(h.substr(0, us));
    if (!seen[marker].insert(axis).second) {
      fail(ErrorKind::MissingColumn, path.string() + ": duplicate column '" + std::string(h) + "'");
    }
    role[c] = static_cast<int>(targets.size());
    targets.push_back({marker, axis});
  }
  for (const auto& [marker, axes] : seen) {
    for (int a = 0; a < 3; ++a) {
      if (!axes.count(a)) {
        fail(ErrorKind::MissingColumn, path.string() + ": missing '" + marker + "_" + std::string(1, char('x' + a)) + "'");
      }
    }
  }
  if (gaze_cols == 1 || gaze_cols == 2) fail(ErrorKind::MissingColumn, path.string() + ": gaze needs both gaze_x and gaze_y");

  Trial t;
  t.id = meta.id;
  t.belt_speed = meta.belt_speed;
  t.task = meta.task;
  t.terrain = meta.terrain;
  for (const auto& [marker, axes] : seen) t.markers[marker];
  if (gaze_cols == 3) t.gaze.emplace();

  std::string line;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    const std::vector<std::string_view> cells = split(line);
    if (cells.size() != header.size()) {
      fail(ErrorKind::IoFailure, path.string() + ": row " + std::to_string(row) + " has " +
                                     std::to_string(cells.size()) + " cells, header has " +
                                     std::to_string(header.size()));
    }
    for (size_t c = 0; c < cells.size(); ++c) {
      const double v = parse_double(cells[c], row, path);
      if (role[c] == -1) {
        t.time.push_back(v);
      } else if (role[c] == -2) {
        t.gaze->x.push_back(v);
      } else if (role[c] == -3) {
        t.gaze->y.push_back(v);
      } else {
        const Target& tg = targets[role[c]];
        t.markers[tg.marker].axis(tg.axis).push_back(v);
      }
    }
  }
  if (t.time.empty()) fail(ErrorKind::EmptyFile, path.string() + " has a header but no rows");
  if (t.time.size() < 2) fail(ErrorKind::TooShort, path.string() + ": need at least two frames to infer fs");

  std::vector<double> steps(t.time.size() - 1);
  for (size_t i = 0; i + 1 < t.time.size(); ++i) steps[i] = t.time[i + 1] - t.time[i];
  std::vector<double> sorted = steps;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  double median = sorted[sorted.size() / 2];
  if (sorted.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(sorted.begin(), sorted.begin() + sorted.size() / 2));
  }
  if (!(median > 0.0)) fail(ErrorKind::NonUniformSampling, path.string() + ": time is not increasing");
  for (size_t i = 0; i < steps.size(); ++i) {
    if (!(steps[i] > 0.0) || std::abs(steps[i] - median) > 0.01 * median) {
      fail(ErrorKind::NonUniformSampling, path.string() + ": step " + std::to_string(i) + " is " +
                                              format_double(steps[i]) + " s against median " +
                                              format_double(median) + " s");
    }
  }
  t.fs = 1.0 / median;
  t.validate();
  return t;
}

void save_trial(const Trial& trial, const std::filesystem::path& path) {
  trial.validate();
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  out << "time";
  for (const auto& [name, tr] : trial.markers) out << ',' << name << "_x," << name << "_y," << name << "_z";
  if (trial.gaze) out << ",gaze_x,gaze_y";
  out << '\n';
  for (size_t i = 0; i < trial.frames(); ++i) {
    out << format_double(trial.time[i]);
    for (const auto& [name, tr] : trial.markers) {
      out << ',' << format_double(tr.x[i]) << ',' << format_double(tr.y[i]) << ',' << format_double(tr.z[i]);
    }
    if (trial.gaze) out << ',' << format_double(trial.gaze->x[i]) << ',' << format_double(trial.gaze->y[i]);
    out << '\n';
  }
  if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

}  // namespace gaitscale
