#pragma once

// Tracking metrics: success (IoU) curve and AUC, overlap precision, center
// error precision and box-normalized precision.

#include "istas/eventsim/types.hpp"

#include <vector>

namespace istas::harness {

using eventsim::BoundingBox;

struct EvalResult {
  std::vector<double> ious;           // per included frame
  std::vector<double> center_errors;  // pixels
  std::vector<double> normalized_errors;
  std::vector<double> sr_thresholds;  // 0, 0.05, ..., 1
  std::vector<double> sr_curve;
  std::vector<double> pr_thresholds;  // 0, 1, ..., 50 px
  std::vector<double> pr_curve;
  std::vector<double> npr_thresholds; // 0, 0.01, ..., 0.5
  std::vector<double> npr_curve;
  double sr_auc = 0;
  double op50 = 0;
  double op75 = 0;
  double pr20 = 0;
  double npr = 0;                     // at 0.2
  int frames = 0;                     // included frames
};

std::vector<double> sr_threshold_grid();
std::vector<double> pr_threshold_grid();
std::vector<double> npr_threshold_grid();

// A frame succeeds at threshold tau when its IoU is positive and at least tau.
bool overlap_success(double iou, double tau);

// Frames with visible[i] == false are excluded. Throws ShapeError on length mismatch.
EvalResult compute_metrics(const std::vector<BoundingBox>& preds, const std::vector<BoundingBox>& gts,
                           const std::vector<bool>& visible);
EvalResult compute_metrics(const std::vector<BoundingBox>& preds, const std::vector<BoundingBox>& gts);

// Mean of per-sequence curves and scalars (sequences with no included frame are skipped).
EvalResult average_results(const std::vector<EvalResult>& per_sequence);

}  // namespace istas::harness
