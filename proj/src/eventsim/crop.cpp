#include "istas/eventsim/crop.hpp"

#include "istas/core/error.hpp"

#include <cmath>

namespace istas::eventsim {

BoundingBox CropTransform::to_crop(const BoundingBox& b) const {
  return {(b.cx - origin_x) * scale_x, (b.cy - origin_y) * scale_y, b.w * scale_x, b.h * scale_y};
}

BoundingBox CropTransform::to_canvas(const BoundingBox& b) const {
  return {b.cx / scale_x + origin_x, b.cy / scale_y + origin_y, b.w / scale_x, b.h / scale_y};
}

CropTransform make_crop(const BoundingBox& box, double context_factor, int out_height, int out_width) {
  if (!box.valid() || !std::isfinite(box.cx) || !std::isfinite(box.cy))
    throw ConfigError("crop: degenerate box");
  if (!(context_factor > 0)) throw ConfigError("crop: context factor must be positive");
  if (out_height <= 0 || out_width <= 0) throw ConfigError("crop: output size must be positive");
  const double side = context_factor * std::sqrt(box.w * box.h);
  CropTransform tf;
  tf.origin_x = box.cx - 0.5 * side;
  tf.origin_y = box.cy - 0.5 * side;
  tf.scale_x = out_width / side;
  tf.scale_y = out_height / side;
  tf.out_height = out_height;
  tf.out_width = out_width;
  return tf;
}

Image apply_crop(const Image& src, const CropTransform& tf) {
  Image out(src.channels(), tf.out_height, tf.out_width);
  const int h = src.height();
  const int w = src.width();
  auto sample = [&](int c, int y, int x) -> double {
    if (x < 0 || x >= w || y < 0 || y >= h) return 0.0;
    return src.at(c, y, x);
  };
  for (int v = 0; v < tf.out_height; ++v) {
    // Pixel centres: crop pixel v covers [v, v+1); canvas index space is offset by 0.5.
    const double ys = tf.origin_y + (v + 0.5) / tf.scale_y - 0.5;
    const int y0 = static_cast<int>(std::floor(ys));
    const double ay = ys - y0;
    for (int u = 0; u < tf.out_width; ++u) {
      const double xs = tf.origin_x + (u + 0.5) / tf.scale_x - 0.5;
      const int x0 = static_cast<int>(std::floor(xs));
      const double ax = xs - x0;
      for (int c = 0; c < src.channels(); ++c) {
        double val = (1 - ay) * ((1 - ax) * sample(c, y0, x0) + (ax > 0 ? ax * sample(c, y0, x0 + 1) : 0.0));
        if (ay > 0) val += ay * ((1 - ax) * sample(c, y0 + 1, x0) + (ax > 0 ? ax * sample(c, y0 + 1, x0 + 1) : 0.0));
        out.at(c, v, u) = val;
      }
    }
  }
  return out;
}

CropResult crop_resize(const Image& src, const BoundingBox& box, double context_factor, int out_height,
                       int out_width) {
  CropResult r;
  r.transform = make_crop(box, context_factor, out_height, out_width);
  r.image = apply_crop(src, r.transform);
  return r;
}

EventTensor crop_events(const EventTensor& src, const CropTransform& tf) {
  EventTensor out;
  out.bin_edges = src.bin_edges;
  out.steps.reserve(src.steps.size());
  for (const Image& img : src.steps) out.steps.push_back(apply_crop(img, tf));
  return out;
}

}  // namespace istas::eventsim
