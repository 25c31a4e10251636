#include <algorithm>
#include <cmath>

#include "gaitscale/artifact_io.hpp"
#include "gaitscale/error.hpp"
#include "gaitscale/format.hpp"
#include "gaitscale/pipeline.hpp"

namespace gaitscale::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr double kPanelW = 340.0, kPanelH = 220.0, kMargin = 40.0;

std::string f(double v) { return format_fixed(v, 2); }

struct Panel {
  double x0, y0;  // top-left of the plotting area
  double lo, hi;  // y range

  double px(double phi) const { return x0 + phi * (kPanelW - 2 * kMargin); }
  double py(double v) const { return y0 + (kPanelH - 2 * kMargin) * (1.0 - (v - lo) / (hi - lo)); }
};

Panel make_panel(double ox, double oy, const std::vector<const std::vector<double>*>& series) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* s : series)
    for (double v : *s)
      if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  return {ox + kMargin, oy + kMargin, lo - pad, hi + pad};
}

void frame(std::string& svg, const Panel& p, const std::string& title) {
  const double w = kPanelW - 2 * kMargin, h = kPanelH - 2 * kMargin;
  svg += "<rect x=\"" + f(p.x0) + "\" y=\"" + f(p.y0) + "\" width=\"" + f(w) + "\" height=\"" + f(h) +
         "\" fill=\"none\" stroke=\"#444\"/>\n";
  svg += "<text x=\"" + f(p.x0) + "\" y=\"" + f(p.y0 - 8) + "\" font-size=\"12\">" + title + "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double phi = i / 4.0;
    svg += "<text x=\"" + f(p.px(phi)) + "\" y=\"" + f(p.y0 + h + 14) + "\" font-size=\"9\" text-anchor=\"middle\">" +
           format_fixed(phi, 2) + "</text>\n";
  }
  for (double v : {p.lo, 0.5 * (p.lo + p.hi), p.hi}) {
    svg += "<text x=\"" + f(p.x0 - 4) + "\" y=\"" + f(p.py(v) + 3) + "\" font-size=\"9\" text-anchor=\"end\">" +
           format_fixed(v, 3) + "</text>\n";
  }
  if (p.lo < 0.0 && p.hi > 0.0) {
    svg += "<line x1=\"" + f(p.x0) + "\" y1=\"" + f(p.py(0)) + "\" x2=\"" + f(p.x0 + w) + "\" y2=\"" + f(p.py(0)) +
           "\" stroke=\"#bbb\" stroke-dasharray=\"2,2\"/>\n";
  }
}

void band(std::string& svg, const Panel& p, double from) {
  const double h = kPanelH - 2 * kMargin;
  svg += "<rect x=\"" + f(p.px(from)) + "\" y=\"" + f(p.y0) + "\" width=\"" + f(p.px(1.0) - p.px(from)) +
         "\" height=\"" + f(h) + "\" fill=\"#e8e8f8\"/>\n";
}

void points(std::string& svg, const Panel& p, const std::vector<double>& x, const std::vector<double>& y,
            const std::string& colour) {
  for (size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(y[i])) continue;
    svg += "<circle cx=\"" + f(p.px(x[i])) + "\" cy=\"" + f(p.py(y[i])) + "\" r=\"2.5\" fill=\"" + colour + "\"/>\n";
  }
}

void line(std::string& svg, const Panel& p, const std::vector<double>& x, const std::vector<double>& y,
          const std::string& colour) {
  if (y.size() != x.size() || y.empty()) return;
  svg += "<polyline fill=\"none\" stroke=\"" + colour + "\" points=\"";
  for (size_t i = 0; i < x.size(); ++i) svg += (i ? " " : "") + f(p.px(x[i])) + "," + f(p.py(y[i]));
  svg += "\"/>\n";
}

void marker(std::string& svg, const Panel& p, double phi, const std::string& colour, const std::string& label) {
  const double h = kPanelH - 2 * kMargin;
  svg += "<line x1=\"" + f(p.px(phi)) + "\" y1=\"" + f(p.y0) + "\" x2=\"" + f(p.px(phi)) + "\" y2=\"" + f(p.y0 + h) +
         "\" stroke=\"" + colour + "\" stroke-dasharray=\"4,2\"/>\n";
  svg += "<text x=\"" + f(p.px(phi) + 2) + "\" y=\"" + f(p.y0 + 10) + "\" font-size=\"9\" fill=\"" + colour + "\">" +
         label + "</text>\n";
}

}  // namespace

int emit_plots(const fs::path& run_dir) {
  const auto curves_dir = run_dir / "curves";
  std::vector<fs::path> files;
  if (fs::is_directory(curves_dir)) {
    for (const auto& e : fs::directory_iterator(curves_dir)) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
  }
  if (files.empty()) fail(ErrorKind::MissingCurves, "no curves in " + curves_dir.string());
  std::sort(files.begin(), files.end());

  int written = 0;
  for (const auto& path : files) {
    const auto name = path.stem().string();
    const auto curve = io::load_curve(path);
    std::vector<ts::TimescaleReport> reps;
    const auto ts_path = run_dir / "timescales" / (name + ".json");
    if (fs::exists(ts_path)) reps = io::load_timescales(ts_path);

    const int rows = reps.empty() ? 1 : 2;
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f(2 * kPanelW) + "\" height=\"" +
                      f(rows * kPanelH + 20) + "\" font-family=\"sans-serif\">\n";
    svg += "<text x=\"10\" y=\"14\" font-size=\"13\">" + name + "</text>\n";
    for (int axis = 0; axis < 2; ++axis) {
      const std::string ax = axis == 0 ? "ML" : "AP";
      const Panel p = make_panel(axis * kPanelW, 20, {&curve.r2[axis], &curve.smoothed[axis]});
      const ts::TimescaleReport* rep = nullptr;
      for (const auto& r : reps)
        if (r.axis == axis) rep = &r;
      if (rep && rep->swing_initiation) band(svg, p, *rep->swing_initiation);
      frame(svg, p, "R2 " + ax);
      line(svg, p, curve.phases, curve.smoothed[axis], "#1f77b4");
      points(svg, p, curve.phases, curve.r2[axis], "#1f77b4");
      if (rep) marker(svg, p, rep->breakpoint, "#2a7", "breakpoint");
      if (!rep) continue;

      const Panel d = make_panel(axis * kPanelW, 20 + kPanelH, {&rep->delta_r2});
      if (rep->swing_initiation) band(svg, d, *rep->swing_initiation);
      frame(svg, d, "dR2 " + ax + " (" + rep->modality + " - baseline)");
      line(svg, d, rep->phases, rep->delta_r2, "#d62728");
      points(svg, d, rep->phases, rep->delta_r2, "#d62728");
      marker(svg, d, rep->peak.phase, "#d62728", "peak");
      if (rep->onset) {
        marker(svg, d, *rep->onset, "#ff7f0e", "onset");
      } else {
        svg += "<text x=\"" + f(d.x0 + 4) + "\" y=\"" + f(d.y0 + kPanelH - 2 * kMargin - 6) +
               "\" font-size=\"10\">onset n.s.</text>\n";
      }
    }
    svg += "</svg>\n";
    io::write_text(run_dir / "plots" / (name + ".svg"), svg);
    ++written;
  }
  return written;
}

}  // namespace gaitscale::pipeline
