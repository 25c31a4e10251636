#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gaitscale {

enum class Task { TreadmillWalk, TreadmillRun, OvergroundWalk };
enum class Terrain { None, Even, Uneven, Flat, Medium, Rough };

std::string_view to_string(Task t);
std::string_view to_string(Terrain t);
Task parse_task(std::string_view s);
Terrain parse_terrain(std::string_view s);

/// x lateral, y fore-aft, z vertical; meters.
struct Trajectory {
  std::vector<double> x, y, z;

  const std::vector<double>& axis(int a) const { return a == 0 ? x : (a == 1 ? y : z); }
  std::vector<double>& axis(int a) { return a == 0 ? x : (a == 1 ? y : z); }
  size_t size() const { return x.size(); }
};

/// Ground-plane fixation points (x lateral, y fore-aft).
struct GazeTrack {
  std::vector<double> x, y;
};

struct TrialMeta {
  int id = 0;
  double belt_speed = 0.0;
  Task task = Task::TreadmillWalk;
  Terrain terrain = Terrain::None;
};

struct Trial {
  int id = 0;
  std::vector<double> time;
  std::map<std::string, Trajectory> markers;
  std::optional<GazeTrack> gaze;
  double fs = 0.0;
  double belt_speed = 0.0;
  Task task = Task::TreadmillWalk;
  Terrain terrain = Terrain::None;

  size_t frames() const { return time.size(); }
  bool walking() const { return task != Task::TreadmillRun; }
  /// Throws InvalidTrial when the invariants do not hold.
  void validate() const;
};

struct Dataset {
  std::string context;
  std::vector<Trial> trials;

  /// Non-empty, ids exactly {0..T-1} in order, each trial valid.
  void validate() const;
};

/// Reads `time,<m>_x,<m>_y,<m>_z,...[,gaze_x,gaze_y]`.
Trial load_trial(const std::filesystem::path& path, const TrialMeta& meta);
/// Writes the same layout at full precision; markers in name order.
void save_trial(const Trial& trial, const std::filesystem::path& path);

}  // namespace gaitscale
