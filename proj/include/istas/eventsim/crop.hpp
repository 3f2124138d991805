#pragma once

#include "istas/eventsim/types.hpp"

namespace istas::eventsim {

// Affine map between canvas coordinates and crop coordinates:
//   u = (x - origin_x) * scale_x,  v = (y - origin_y) * scale_y.
struct CropTransform {
  double origin_x = 0;
  double origin_y = 0;
  double scale_x = 1;
  double scale_y = 1;
  int out_height = 0;
  int out_width = 0;

  BoundingBox to_crop(const BoundingBox& canvas_box) const;
  BoundingBox to_canvas(const BoundingBox& crop_box) const;
};

// Square crop of side context_factor * sqrt(w * h) centred on the box.
CropTransform make_crop(const BoundingBox& box, double context_factor, int out_height, int out_width);

// Bilinear resample of `src` through `tf`; samples outside the canvas are zero.
Image apply_crop(const Image& src, const CropTransform& tf);

struct CropResult {
  Image image;
  CropTransform transform;
};

// Throws ConfigError on a degenerate box or non-positive context/output size.
CropResult crop_resize(const Image& src, const BoundingBox& box, double context_factor, int out_height,
                       int out_width);

EventTensor crop_events(const EventTensor& src, const CropTransform& tf);

}  // namespace istas::eventsim
