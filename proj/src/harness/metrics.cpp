#include "istas/harness/metrics.hpp"

#include "istas/core/error.hpp"

#include <cmath>

namespace istas::harness {

namespace {

// Identical boxes can miss IoU == 1 by a rounding error.
constexpr double kIouSlack = 1e-9;

std::vector<double> grid(int count, double step) {
  std::vector<double> g(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = i * step;
  return g;
}

double fraction(const std::vector<double>& values, auto&& pred) {
  if (values.empty()) return 0.0;
  std::size_t hit = 0;
  for (double v : values)
    if (pred(v)) ++hit;
  return static_cast<double>(hit) / static_cast<double>(values.size());
}

}  // namespace

std::vector<double> sr_threshold_grid() {
  auto g = grid(21, 0.05);
  g.back() = 1.0;
  return g;
}

std::vector<double> pr_threshold_grid() { return grid(51, 1.0); }

std::vector<double> npr_threshold_grid() { return grid(51, 0.01); }

bool overlap_success(double iou, double tau) { return iou > 0 && iou >= tau - kIouSlack; }

EvalResult compute_metrics(const std::vector<BoundingBox>& preds, const std::vector<BoundingBox>& gts,
                           const std::vector<bool>& visible) {
  if (preds.size() != gts.size() || visible.size() != gts.size())
    throw ShapeError("compute_metrics: predictions, ground truth and visibility differ in length");
  EvalResult r;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (!visible[i]) continue;
    const BoundingBox& p = preds[i];
    const BoundingBox& g = gts[i];
    const double dx = p.cx - g.cx;
    const double dy = p.cy - g.cy;
    r.ious.push_back(p.valid() ? eventsim::iou(p, g) : 0.0);
    r.center_errors.push_back(std::hypot(dx, dy));
    r.normalized_errors.push_back(std::hypot(dx / g.w, dy / g.h));
  }
  r.frames = static_cast<int>(r.ious.size());
  r.sr_thresholds = sr_threshold_grid();
  r.pr_thresholds = pr_threshold_grid();
  r.npr_thresholds = npr_threshold_grid();
  for (double tau : r.sr_thresholds)
    r.sr_curve.push_back(fraction(r.ious, [tau](double v) { return overlap_success(v, tau); }));
  for (double d : r.pr_thresholds) r.pr_curve.push_back(fraction(r.center_errors, [d](double v) { return v <= d; }));
  for (double d : r.npr_thresholds)
    r.npr_curve.push_back(fraction(r.normalized_errors, [d](double v) { return v <= d; }));
  double s = 0;
  for (double v : r.sr_curve) s += v;
  r.sr_auc = s / static_cast<double>(r.sr_curve.size());
  r.op50 = fraction(r.ious, [](double v) { return overlap_success(v, 0.5); });
  r.op75 = fraction(r.ious, [](double v) { return overlap_success(v, 0.75); });
  r.pr20 = fraction(r.center_errors, [](double v) { return v <= 20.0; });
  r.npr = fraction(r.normalized_errors, [](double v) { return v <= 0.2; });
  return r;
}

EvalResult compute_metrics(const std::vector<BoundingBox>& preds, const std::vector<BoundingBox>& gts) {
  return compute_metrics(preds, gts, std::vector<bool>(gts.size(), true));
}

EvalResult average_results(const std::vector<EvalResult>& per_sequence) {
  EvalResult out;
  out.sr_thresholds = sr_threshold_grid();
  out.pr_thresholds = pr_threshold_grid();
  out.npr_thresholds = npr_threshold_grid();
  out.sr_curve.assign(out.sr_thresholds.size(), 0.0);
  out.pr_curve.assign(out.pr_thresholds.size(), 0.0);
  out.npr_curve.assign(out.npr_thresholds.size(), 0.0);
  int used = 0;
  for (const auto& r : per_sequence) {
    if (r.frames == 0) continue;
    ++used;
    for (std::size_t i = 0; i < out.sr_curve.size(); ++i) out.sr_curve[i] += r.sr_curve[i];
    for (std::size_t i = 0; i < out.pr_curve.size(); ++i) out.pr_curve[i] += r.pr_curve[i];
    for (std::size_t i = 0; i < out.npr_curve.size(); ++i) out.npr_curve[i] += r.npr_curve[i];
    out.sr_auc += r.sr_auc;
    out.op50 += r.op50;
    out.op75 += r.op75;
    out.pr20 += r.pr20;
    out.npr += r.npr;
    out.frames += r.frames;
    out.ious.insert(out.ious.end(), r.ious.begin(), r.ious.end());
    out.center_errors.insert(out.center_errors.end(), r.center_errors.begin(), r.center_errors.end());
    out.normalized_errors.insert(out.normalized_errors.end(), r.normalized_errors.begin(), r.normalized_errors.end());
  }
  if (used == 0) return out;
  const double n = used;
  for (double& v : out.sr_curve) v /= n;
  for (double& v : out.pr_curve) v /= n;
  for (double& v : out.npr_curve) v /= n;
  out.sr_auc /= n;
  out.op50 /= n;
  out.op75 /= n;
  out.pr20 /= n;
  out.npr /= n;
  return out;
}

}  // namespace istas::harness
