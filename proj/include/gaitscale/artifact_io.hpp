#pragma once

#include <filesystem>

#include "gaitscale/crossval.hpp"
#include "gaitscale/modelzoo.hpp"
#include "gaitscale/timescale.hpp"

namespace gaitscale::io {

inline constexpr int kSchemaVersion = 1;

// Reports are JSON documents carrying "schema_version" and "kind".
void save_report(const cv::EvalCurve& curve, const std::filesystem::path& path);
void save_report(const cv::ModelScore& score, const std::filesystem::path& path);
void save_report(const ts::TimescaleReport& report, const std::filesystem::path& path);

cv::EvalCurve load_curve(const std::filesystem::path& path);
cv::ModelScore load_score(const std::filesystem::path& path);
ts::TimescaleReport load_timescale(const std::filesystem::path& path);

/// Several timescale reports (e.g. both axes of one model) in one file.
void save_report(const std::vector<ts::TimescaleReport>& reports, const std::filesystem::path& path);
std::vector<ts::TimescaleReport> load_timescales(const std::filesystem::path& path);

/// One JSON header line followed by the little-endian float64 blocks it lists.
void save_checkpoint(const model::TrainedModel& model, const std::filesystem::path& path);
model::TrainedModel load_checkpoint(const std::filesystem::path& path);
/// Throws ArchitectureMismatch unless the stored spec equals `expected`.
model::TrainedModel load_checkpoint(const std::filesystem::path& path, const model::ModelSpec& expected);

/// Writes `text` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace gaitscale::io
