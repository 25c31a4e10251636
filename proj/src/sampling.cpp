#include "gaitscale/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gaitscale/error.hpp"
#include "gaitscale/format.hpp"

namespace gaitscale {

int phase_index(double phi) {
  const double g = phi * kPhasesPerCycle;
  const double r = std::round(g);
  if (!std::isfinite(phi) || r < 0 || r > kPhasesPerCycle || std::abs(g - r) > 1e-9) {
    fail(ErrorKind::InvalidPhase, "phase " + format_double(phi) + " is not on the 21-point grid");
  }
  return static_cast<int>(r);
}

double phase_value(int index) { return static_cast<double>(index) / kPhasesPerCycle; }

std::string_view to_string(ModalityKind kind) {
  switch (kind) {
    case ModalityKind::Com: return "com";
    case ModalityKind::FullBody: return "full_body";
    case ModalityKind::SwingFoot: return "swing_foot";
    case ModalityKind::Gaze: return "gaze";
  }
  return "?";
}

ModalityKind parse_modality(std::string_view name) {
  for (auto k : {ModalityKind::Com, ModalityKind::FullBody, ModalityKind::SwingFoot, ModalityKind::Gaze}) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorKind::ConfigInvalid, "unknown modality '" + std::string(name) + "'");
}

namespace {

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

const std::vector<std::string>& marker_list(const ModalitySpec& m, const ChannelLayout& layout, Foot striking) {
  switch (m.kind) {
    case ModalityKind::Com: return m.com_markers;
    case ModalityKind::FullBody: return m.full_body_markers.empty() ? layout.markers : m.full_body_markers;
    case ModalityKind::SwingFoot: return m.swing_markers[static_cast<int>(striking)];
    case ModalityKind::Gaze: break;
  }
  static const std::vector<std::string> none;
  return none;
}

}  // namespace

int ModalitySpec::features(const ChannelLayout& layout) const {
  const int per_axis = include_velocity ? 2 : 1;
  switch (kind) {
    case ModalityKind::Gaze: return 2;
    case ModalityKind::Com: return 3 * per_axis;
    default: return static_cast<int>(marker_list(*this, layout, Foot::Left).size()) * 3 * per_axis;
  }
}

FootPlacement foot_placement_target(const KinematicSeries& series, std::span<const HeelStrikeEvent> events,
                                    const HeelStrikeEvent& strike,
                                    const std::array<std::vector<std::string>, 2>& foot_markers) {
  const Foot other = opposite(strike.foot);
  const HeelStrikeEvent* prior = nullptr;
  for (const auto& e : events) {
    if (e.foot == other && e.frame < strike.frame && (!prior || e.frame > prior->frame)) prior = &e;
  }
  if (!prior) fail(ErrorKind::NoPriorOppositeStrike, "strike at frame " + std::to_string(strike.frame));
  auto contact = [&](Foot foot, int frame) {
    const auto& names = foot_markers[static_cast<int>(foot)];
    if (names.empty()) fail(ErrorKind::UnknownMarker, "empty foot marker list");
    std::array<double, 2> p{0.0, 0.0};
    for (const auto& n : names) {
      const auto it = series.raw_position.find(n);
      if (it == series.raw_position.end()) fail(ErrorKind::UnknownMarker, "foot marker '" + n + "'");
      p[0] += it->second.x[frame];
      p[1] += it->second.y[frame];
    }
    p[0] /= static_cast<double>(names.size());
    p[1] /= static_cast<double>(names.size());
    return p;
  };
  const auto a = contact(strike.foot, strike.frame);
  const auto b = contact(other, prior->frame);
  return {a[0] - b[0], a[1] - b[1]};
}

Eigen::MatrixXd modality_features(const ChannelLayout& layout, const Eigen::MatrixXd& rows,
                                  const ModalitySpec& modality, Foot striking) {
  const int per_axis = modality.include_velocity ? 2 : 1;
  if (modality.kind == ModalityKind::Gaze) {
    if (!layout.has_gaze) fail(ErrorKind::UnknownMarker, "trial has no gaze track");
    Eigen::MatrixXd out(rows.rows(), 2);
    out.col(0) = rows.col(layout.gaze_column(0));
    out.col(1) = rows.col(layout.gaze_column(1));
    return out;
  }
  const auto& names = marker_list(modality, layout, striking);
  if (names.empty()) fail(ErrorKind::UnknownMarker, "modality " + std::string(to_string(modality.kind)) + " has no markers");
  if (modality.kind == ModalityKind::Com) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows.rows(), 3 * per_axis);
    for (const auto& n : names) {
      for (int a = 0; a < 3; ++a) {
        for (int d = 0; d < per_axis; ++d) out.col(a * per_axis + d) += rows.col(layout.column(n, a, d == 1));
      }
    }
    return out / static_cast<double>(names.size());
  }
  const auto order = sorted(names);
  Eigen::MatrixXd out(rows.rows(), static_cast<Eigen::Index>(order.size()) * 3 * per_axis);
  int c = 0;
  for (const auto& n : order) {
    for (int a = 0; a < 3; ++a) {
      for (int d = 0; d < per_axis; ++d) out.col(c++) = rows.col(layout.column(n, a, d == 1));
    }
  }
  return out;
}

std::vector<Sample> build_samples(std::span<const ProcessedTrial> trials, const ModalitySpec& modality, double phi,
                                  const TargetBounds& bounds, SamplingReport* report) {
  const int k = phase_index(phi);
  SamplingReport rep;
  std::vector<Sample> out;
  for (const auto& trial : trials) {
    const auto& cycles = trial.cycles;
    for (Foot foot : {Foot::Left, Foot::Right}) {
      std::vector<const GaitCycle*> mine;
      for (const auto& c : cycles) {
        if (c.foot == foot) mine.push_back(&c);
      }
      for (size_t i = 0; i < mine.size(); ++i) {
        ++rep.candidates;
        if (i < 2) {
          ++rep.insufficient_history;
          continue;
        }
        const GaitCycle* win[3] = {mine[i - 2], mine[i - 1], mine[i]};
        if (!win[0]->valid || !win[1]->valid || !win[2]->valid) {
          ++rep.touches_rejected;
          continue;
        }
        FootPlacement y;
        try {
          y = foot_placement_target(trial.series, trial.events, win[2]->end, modality.swing_markers);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::NoPriorOppositeStrike) throw;
          ++rep.insufficient_history;
          continue;
        }
        if (!std::isfinite(y.ml) || !std::isfinite(y.ap) || std::abs(y.ml) >= bounds.ml ||
            std::abs(y.ap) >= bounds.ap) {
          ++rep.out_of_bounds;
          continue;
        }
        Eigen::MatrixXd rows(kHistoryRows + k, trial.layout.channels());
        rows.topRows(kPhasesPerCycle) = win[0]->phases;
        rows.middleRows(kPhasesPerCycle, kPhasesPerCycle) = win[1]->phases;
        const int last = std::min(k + 1, kPhasesPerCycle);
        rows.middleRows(2 * kPhasesPerCycle, last) = win[2]->phases.topRows(last);
        if (k == kPhasesPerCycle) rows.bottomRows(1) = win[2]->terminal;

        Sample s;
        s.S = modality_features(trial.layout, rows, modality, foot);
        if (!s.S.allFinite()) fail(ErrorKind::InvalidTrial, "non-finite features in trial " + std::to_string(trial.series.id));
        s.trial = trial.series.id;
        s.flag = static_cast<int>(foot);
        s.phi = phase_value(k);
        s.y = y;
        s.strike_frame = win[2]->end.frame;
        out.push_back(std::move(s));
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Sample& a, const Sample& b) {
    return a.trial != b.trial ? a.trial < b.trial : a.strike_frame < b.strike_frame;
  });
  rep.emitted = static_cast<int>(out.size());
  if (report) *report = rep;
  if (out.empty()) fail(ErrorKind::InsufficientHistory, "no heel strike has three valid strides of history");
  return out;
}

namespace {

void accumulate(const Eigen::MatrixXd& S, Eigen::RowVectorXd& sum, Eigen::RowVectorXd& sq, double& n) {
  sum += S.colwise().sum();
  sq += S.array().square().matrix().colwise().sum();
  n += static_cast<double>(S.rows());
}

}  // namespace

Standardizer Standardizer::from_moments(std::map<int, Moments> per_trial, Moments pooled) {
  Standardizer out;
  out.per_trial_ = std::move(per_trial);
  out.pooled_ = std::move(pooled);
  return out;
}

Standardizer Standardizer::fit(std::span<const Sample> samples) {
  if (samples.empty()) fail(ErrorKind::TooFewSamples, "standardizer needs at least one sample");
  const Eigen::Index m = samples.front().S.cols();
  struct Acc {
    Eigen::RowVectorXd sum, sq;
    double n = 0;
  };
  auto fresh = [&] { return Acc{Eigen::RowVectorXd::Zero(m), Eigen::RowVectorXd::Zero(m), 0.0}; };
  std::map<int, Acc> acc;
  Acc all = fresh();
  for (const auto& s : samples) {
    if (s.S.cols() != m) fail(ErrorKind::ShapeMismatch, "samples differ in feature count");
    auto it = acc.try_emplace(s.trial, fresh()).first;
    accumulate(s.S, it->second.sum, it->second.sq, it->second.n);
    accumulate(s.S, all.sum, all.sq, all.n);
  }
  auto finish = [](const Acc& a) {
    Moments mo;
    mo.mean = a.sum / a.n;
    Eigen::RowVectorXd var = (a.sq / a.n - mo.mean.array().square().matrix()).cwiseMax(0.0);
    mo.scale = var.cwiseSqrt();
    for (Eigen::Index j = 0; j < mo.scale.size(); ++j) {
      if (!(mo.scale[j] > 1e-12 * std::max(1.0, std::abs(mo.mean[j])))) mo.scale[j] = 1.0;
    }
    return mo;
  };
  Standardizer z;
  for (const auto& [id, a] : acc) z.per_trial_[id] = finish(a);
  z.pooled_ = finish(all);
  return z;
}

Eigen::MatrixXd Standardizer::transform(const Eigen::MatrixXd& S, int trial) const {
  const auto it = per_trial_.find(trial);
  const Moments& mo = it == per_trial_.end() ? pooled_ : it->second;
  if (S.cols() != mo.mean.size()) fail(ErrorKind::ShapeMismatch, "feature count differs from fitted standardizer");
  return ((S.rowwise() - mo.mean).array().rowwise() / mo.scale.array()).matrix();
}

void Standardizer::apply(std::vector<Sample>& samples) const {
  for (auto& s : samples) s.S = transform(s.S, s.trial);
}

TargetScaler TargetScaler::fit(std::span<const Sample> samples) {
  if (samples.empty()) fail(ErrorKind::TooFewSamples, "target scaler needs at least one sample");
  TargetScaler t;
  const double n = static_cast<double>(samples.size());
  for (int a = 0; a < 2; ++a) {
    double m = 0.0;
    for (const auto& s : samples) m += (a == 0 ? s.y.ml : s.y.ap) / n;
    double v = 0.0;
    for (const auto& s : samples) {
      const double d = (a == 0 ? s.y.ml : s.y.ap) - m;
      v += d * d / n;
    }
    t.mean[a] = m;
    t.scale[a] = v > 0.0 ? std::sqrt(v) : 1.0;
  }
  return t;
}

FootPlacement TargetScaler::forward(const FootPlacement& y) const {
  return {(y.ml - mean[0]) / scale[0], (y.ap - mean[1]) / scale[1]};
}

FootPlacement TargetScaler::inverse(const FootPlacement& y) const {
  return {y.ml * scale[0] + mean[0], y.ap * scale[1] + mean[1]};
}

grad::TensorDataset to_tensor(std::span<const Sample> samples, const TargetScaler& scaler) {
  grad::TensorDataset d;
  if (samples.empty()) return d;
  const Eigen::Index t = samples.front().S.rows(), m = samples.front().S.cols();
  d.steps = static_cast<int>(t);
  d.x.resize(static_cast<Eigen::Index>(samples.size()) * t, m);
  d.y.resize(static_cast<Eigen::Index>(samples.size()), 2);
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.S.rows() != t || s.S.cols() != m) fail(ErrorKind::ShapeMismatch, "samples differ in window shape");
    d.x.middleRows(static_cast<Eigen::Index>(i) * t, t) = s.S;
    const auto y = scaler.forward(s.y);
    d.y(static_cast<Eigen::Index>(i), 0) = y.ml;
    d.y(static_cast<Eigen::Index>(i), 1) = y.ap;
    d.trials.push_back(s.trial);
    d.flags.push_back(s.flag);
  }
  return d;
}

std::string samples_dump(std::span<const Sample> samples, char delimiter) {
  std::ostringstream os;
  if (samples.empty()) return {};
  const auto& first = samples.front().S;
  for (Eigen::Index r = 0; r < first.rows(); ++r) {
    for (Eigen::Index c = 0; c < first.cols(); ++c) os << 's' << r << '_' << c << delimiter;
  }
  os << 'v' << delimiter << 'l' << delimiter << "phi" << delimiter << "y_ml" << delimiter << "y_ap\n";
  for (const auto& s : samples) {
    for (Eigen::Index r = 0; r < s.S.rows(); ++r) {
      for (Eigen::Index c = 0; c < s.S.cols(); ++c) os << format_double(s.S(r, c)) << delimiter;
    }
    os << s.trial << delimiter << s.flag << delimiter << format_double(s.phi) << delimiter << format_double(s.y.ml)
       << delimiter << format_double(s.y.ap) << '\n';
  }
  return os.str();
}

}  // namespace gaitscale
