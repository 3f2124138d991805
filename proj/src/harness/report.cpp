#include "istas/harness/report.hpp"

#include "istas/core/error.hpp"
#include "istas/eventsim/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace istas::harness {

namespace fs = std::filesystem;

namespace {

struct Canvas {
  eventsim::Image img;

  void put(int x, int y, const std::array<double, 3>& c) {
    if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
    for (int k = 0; k < 3; ++k) img.at(k, y, x) = c[static_cast<std::size_t>(k)];
  }

  void line(double x0, double y0, double x1, double y1, const std::array<double, 3>& c, int thickness) {
    const int n = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    const int r = thickness / 2;
    for (int i = 0; i <= n; ++i) {
      const double t = static_cast<double>(i) / n;
      const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
      const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) put(x + dx, y + dy, c);
    }
  }
};

}  // namespace

eventsim::Image render_plot(const std::vector<PlotSeries>& series, const PlotRange& range, int width, int height) {
  if (width < 40 || height < 40) throw ConfigError("render_plot: canvas too small");
  if (!(range.x_max > range.x_min) || !(range.y_max > range.y_min)) throw ConfigError("render_plot: empty range");
  Canvas cv{eventsim::Image(3, height, width, 1.0)};
  const int margin = 20;
  const double pw = width - 2 * margin;
  const double ph = height - 2 * margin;
  auto px = [&](double x) { return margin + (x - range.x_min) / (range.x_max - range.x_min) * pw; };
  auto py = [&](double y) { return height - margin - (y - range.y_min) / (range.y_max - range.y_min) * ph; };
  const std::array<double, 3> grid{0.85, 0.85, 0.85};
  const std::array<double, 3> axis{0.0, 0.0, 0.0};
  for (int i = 1; i < 10; ++i) {
    const double gx = margin + pw * i / 10.0;
    const double gy = margin + ph * i / 10.0;
    cv.line(gx, margin, gx, height - margin, grid, 1);
    cv.line(margin, gy, width - margin, gy, grid, 1);
  }
  cv.line(margin, margin, margin, height - margin, axis, 1);
  cv.line(margin, height - margin, width - margin, height - margin, axis, 1);
  cv.line(width - margin, margin, width - margin, height - margin, axis, 1);
  cv.line(margin, margin, width - margin, margin, axis, 1);
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("render_plot: series x and y differ in length");
    for (std::size_t i = 1; i < s.x.size(); ++i)
      cv.line(px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), s.color, 3);
  }
  return cv.img;
}

nlohmann::json to_json(const EvalResult& r) {
  nlohmann::json j;
  j["frames"] = r.frames;
  j["sr_auc"] = r.sr_auc;
  j["op50"] = r.op50;
  j["op75"] = r.op75;
  j["pr20"] = r.pr20;
  j["npr"] = r.npr;
  j["sr_thresholds"] = r.sr_thresholds;
  j["sr_curve"] = r.sr_curve;
  j["pr_thresholds"] = r.pr_thresholds;
  j["pr_curve"] = r.pr_curve;
  j["npr_thresholds"] = r.npr_thresholds;
  j["npr_curve"] = r.npr_curve;
  return j;
}

void write_curve_csv(const fs::path& path, const std::string& x_name, const std::vector<double>& x,
                     const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("write_curve_csv: x and y differ in length");
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << x_name << ",value\n" << std::setprecision(10);
  for (std::size_t i = 0; i < x.size(); ++i) os << x[i] << ',' << y[i] << '\n';
}

void write_eval_outputs(const fs::path& dir, const EvalResult& r) {
  fs::create_directories(dir);
  write_curve_csv(dir / "sr_curve.csv", "iou_threshold", r.sr_thresholds, r.sr_curve);
  write_curve_csv(dir / "pr_curve.csv", "pixel_threshold", r.pr_thresholds, r.pr_curve);
  write_curve_csv(dir / "npr_curve.csv", "normalized_threshold", r.npr_thresholds, r.npr_curve);
  eventsim::write_png(dir / "sr_plot.png", render_plot({{r.sr_thresholds, r.sr_curve}}, {0, 1, 0, 1}));
  eventsim::write_png(dir / "pr_plot.png", render_plot({{r.pr_thresholds, r.pr_curve}}, {0, 50, 0, 1}));
  std::ofstream(dir / "summary.json") << to_json(r).dump(2) << '\n';
}

nlohmann::json summary_json(const std::map<std::string, EvalResult>& by_split) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, r] : by_split) {
    j[name] = {{"frames", r.frames}, {"sr_auc", r.sr_auc}, {"op50", r.op50},
               {"op75", r.op75},     {"pr20", r.pr20},     {"npr", r.npr}};
  }
  return j;
}

}  // namespace istas::harness
