#pragma once

// Result emission: curve CSVs, line-plot PNGs and summary JSON.

#include "istas/harness/metrics.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace istas::harness {

struct PlotSeries {
  std::vector<double> x;
  std::vector<double> y;
  std::array<double, 3> color{0.1, 0.3, 0.8};
};

struct PlotRange {
  double x_min = 0, x_max = 1;
  double y_min = 0, y_max = 1;
};

// Rasterized line plot with a frame and a 10 x 10 grid; y grows upward.
eventsim::Image render_plot(const std::vector<PlotSeries>& series, const PlotRange& range, int width = 480,
                            int height = 360);

nlohmann::json to_json(const EvalResult& r);  // scalars and curves
void write_curve_csv(const std::filesystem::path& path, const std::string& x_name, const std::vector<double>& x,
                     const std::vector<double>& y);

// Writes sr_curve.csv, pr_curve.csv, npr_curve.csv, sr_plot.png, pr_plot.png
// and summary.json into `dir`.
void write_eval_outputs(const std::filesystem::path& dir, const EvalResult& r);

// Per-split summary JSON keyed by split name.
nlohmann::json summary_json(const std::map<std::string, EvalResult>& by_split);

}  // namespace istas::harness
