#pragma once

// Center-based prediction head, box decoding, target encoding and the
// focal + L1 + GIoU training loss.

#include "istas/core/layers.hpp"
#include "istas/eventsim/crop.hpp"

#include <optional>
#include <string>
#include <vector>

namespace istas::tracker {

using eventsim::BoundingBox;

// Raw head outputs over a G x G search grid (cell index i*G + j, row i, column j).
struct HeadOutput {
  Var score;   // 1 x G^2 center logits
  Var offset;  // 2 x G^2 sub-cell center offset (x, y) in cells
  Var size;    // 2 x G^2 size logits; sigmoid gives (w, h) as a fraction of the crop
  int grid = 0;
};

struct HeadMaps {
  Matrix score;
  Matrix offset;
  Matrix size;
  int grid = 0;

  static HeadMaps from(const HeadOutput& out) { return {out.score.value(), out.offset.value(), out.size.value(), out.grid}; }
};

// Three branches (score, offset, size) of conv3x3 -> ReLU -> conv3x3.
class PredictionHead {
 public:
  PredictionHead() = default;
  PredictionHead(const std::string& name, int dim, int hidden, int grid, bool bias, Rng& rng);
  // search_tokens: M x G^2, tokens row-major over the grid.
  HeadOutput forward(Context& ctx, const Var& search_tokens);
  void collect(std::vector<Parameter*>& out);

 private:
  struct Branch {
    Linear conv1;  // (9 * M) -> hidden
    Linear conv2;  // (9 * hidden) -> out
  };
  Var run(Context& ctx, Branch& b, const Var& x, const std::string& layer);
  std::string name_;
  int grid_ = 0;
  Branch score_, offset_, size_;
};

// Peak cell of the score map plus its offset gives the crop-space center;
// the size logits at the peak give (w, h). The center is clamped into the crop.
BoundingBox decode_box_crop(const HeadMaps& maps, int search_size);
BoundingBox decode_box(const HeadMaps& maps, int search_size, const eventsim::CropTransform& crop);

struct TargetMaps {
  Matrix heatmap;  // 1 x G^2 Gaussian, exactly 1 at the peak cell
  int peak = 0;    // i*G + j of the cell holding the box center
  HeadMaps maps;   // maps that decode to the box (score = heatmap)
};

// Gaussian width in cells for a crop-space box.
double heatmap_sigma(const BoundingBox& crop_box, int grid, int search_size);
// Fails (nullopt) when the box center lies outside the crop.
std::optional<TargetMaps> encode_targets(const BoundingBox& crop_box, int grid, int search_size);

double giou(const BoundingBox& a, const BoundingBox& b);
// Penalty-reduced focal loss (alpha 2, beta 4) on logits, normalized by the positive count.
double focal_loss(const Matrix& logits, const Matrix& heatmap);

struct LossWeights {
  double focal = 2.0;
  double l1 = 5.0;
  double giou = 1.0;
};

struct LossParts {
  Var total;
  double focal = 0;
  double l1 = 0;
  double giou = 0;   // 1 - GIoU
};

// Total loss against a crop-space gt box. The regression terms use the
// prediction read at the gt peak cell, in crop-normalized xyxy coordinates.
// nullopt when the gt center lies outside the crop.
std::optional<LossParts> loss_total(const HeadOutput& out, const BoundingBox& crop_gt, int search_size,
                                    const LossWeights& weights);

// Differentiable pieces, exposed for gradient checks.
Var focal_loss(const Var& logits, const Matrix& heatmap);
// box: 4 x 1 (cx, cy, w, h) -> 1 x 1 value of 1 - GIoU against `gt`.
Var giou_loss(const Var& box, const BoundingBox& gt);

}  // namespace istas::tracker
