#include "istas/eventsim/scene.hpp"

#include "istas/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace istas::eventsim {

namespace {

// Triangle-wave fold of p into [lo, hi] (reflection off both ends).
double fold(double p, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0) return 0.5 * (lo + hi);
  double q = std::fmod(p - lo, 2 * span);
  if (q < 0) q += 2 * span;
  return lo + (q <= span ? q : 2 * span - q);
}

double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

Image make_background(const SceneSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image bg(3, spec.height, spec.width);
  std::array<double, 3> base{0.35 + 0.2 * u(rng), 0.35 + 0.2 * u(rng), 0.35 + 0.2 * u(rng)};
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) bg.at(c, y, x) = base[c];

  // Smooth colour blobs.
  const int blobs = 10;
  for (int b = 0; b < blobs; ++b) {
    const double bx = u(rng) * spec.width;
    const double by = u(rng) * spec.height;
    const double sigma = 6.0 + 18.0 * u(rng);
    std::array<double, 3> amp{0.3 * (u(rng) - 0.5), 0.3 * (u(rng) - 0.5), 0.3 * (u(rng) - 0.5)};
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const double d2 = (x + 0.5 - bx) * (x + 0.5 - bx) + (y + 0.5 - by) * (y + 0.5 - by);
        const double wgt = std::exp(-0.5 * d2 / (sigma * sigma));
        for (int c = 0; c < 3; ++c) bg.at(c, y, x) += amp[c] * wgt;
      }
    }
  }

  // Fine value-noise texture on an 8 px lattice.
  const int cell = 8;
  const int gw = spec.width / cell + 2;
  const int gh = spec.height / cell + 2;
  std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
  for (double& v : lattice) v = 0.08 * (u(rng) - 0.5);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const double fx = static_cast<double>(x) / cell;
      const double fy = static_cast<double>(y) / cell;
      const int ix = static_cast<int>(fx);
      const int iy = static_cast<int>(fy);
      const double ax = fx - ix;
      const double ay = fy - iy;
      auto L = [&](int i, int j) { return lattice[static_cast<std::size_t>(j) * gw + i]; };
      const double n = (1 - ax) * (1 - ay) * L(ix, iy) + ax * (1 - ay) * L(ix + 1, iy) +
                       (1 - ax) * ay * L(ix, iy + 1) + ax * ay * L(ix + 1, iy + 1);
      for (int c = 0; c < 3; ++c) bg.at(c, y, x) = std::clamp(bg.at(c, y, x) + n, 0.02, 0.98);
    }
  }
  return bg;
}

bool inside_shape(ShapeKind shape, const BoundingBox& b, double px, double py) {
  if (shape == ShapeKind::Rectangle) return px >= b.x0() && px < b.x1() && py >= b.y0() && py < b.y1();
  const double dx = (px - b.cx) / (0.5 * b.w);
  const double dy = (py - b.cy) / (0.5 * b.h);
  return dx * dx + dy * dy <= 1.0;
}

void draw_object(Image& img, const MovingObject& obj, const BoundingBox& b) {
  constexpr int ss = 3;
  const int x_lo = std::max(0, static_cast<int>(std::floor(b.x0())));
  const int x_hi = std::min(img.width() - 1, static_cast<int>(std::ceil(b.x1())));
  const int y_lo = std::max(0, static_cast<int>(std::floor(b.y0())));
  const int y_hi = std::min(img.height() - 1, static_cast<int>(std::ceil(b.y1())));
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      int hits = 0;
      double shade = 0;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const double px = x + (sx + 0.5) / ss;
          const double py = y + (sy + 0.5) / ss;
          if (!inside_shape(obj.shape, b, px, py)) continue;
          ++hits;
          // Diagonal stripes in object coordinates give the target some texture.
          const double u = (px - b.x0()) / b.w;
          const double v = (py - b.y0()) / b.h;
          shade += 0.85 + 0.15 * std::sin(2.0 * M_PI * 2.0 * (u + v));
        }
      }
      if (hits == 0) continue;
      const double cov = static_cast<double>(hits) / (ss * ss);
      shade /= hits;
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = (1 - cov) * img.at(c, y, x) + cov * std::clamp(obj.color[c] * shade, 0.0, 1.0);
    }
  }
}

}  // namespace

void SceneSpec::validate() const {
  if (width < 8 || height < 8) throw ConfigError("scene: canvas must be at least 8x8");
  if (!(fps > 0)) throw ConfigError("scene: fps must be positive");
  if (num_frames < 1) throw ConfigError("scene: need at least one frame");
  if (!target.start.valid()) throw ConfigError("scene: target box must have positive size");
  if (target.start.cx < 0 || target.start.cx > width || target.start.cy < 0 || target.start.cy > height)
    throw ConfigError("scene: target must start inside the canvas");
  if (target.start.w > width || target.start.h > height) throw ConfigError("scene: target larger than canvas");
  if (!(target.scale_rate > 0)) throw ConfigError("scene: scale_rate must be positive");
  for (const auto& d : distractors)
    if (!d.start.valid() || !(d.scale_rate > 0)) throw ConfigError("scene: invalid distractor");
  if (!(illumination > 0)) throw ConfigError("scene: illumination must be positive");
  for (const auto& e : episodes)
    if (!(e.level > 0) || e.last < e.first) throw ConfigError("scene: invalid light episode");
  if (sensor_noise < 0) throw ConfigError("scene: sensor noise must be nonnegative");
}

double SceneSpec::illumination_at(int frame) const {
  for (const auto& e : episodes)
    if (frame >= e.first && frame <= e.last) return e.level;
  return illumination;
}

BoundingBox object_box_at(const MovingObject& obj, int frame, int width, int height) {
  const double lim = 0.5 * std::min(width, height);
  const double s = std::pow(obj.scale_rate, frame);
  BoundingBox b;
  b.w = std::clamp(obj.start.w * s, std::min(4.0, obj.start.w), std::max(lim, obj.start.w));
  b.h = std::clamp(obj.start.h * s, std::min(4.0, obj.start.h), std::max(lim, obj.start.h));
  b.w = std::min(b.w, static_cast<double>(width));
  b.h = std::min(b.h, static_cast<double>(height));
  b.cx = fold(obj.start.cx + obj.vx * frame, 0.5 * b.w, width - 0.5 * b.w);
  b.cy = fold(obj.start.cy + obj.vy * frame, 0.5 * b.h, height - 0.5 * b.h);
  return b;
}

RenderedScene render_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const Image background = make_background(spec, rng);
  std::normal_distribution<double> noise(0.0, 1.0);

  RenderedScene out;
  out.frames.reserve(spec.num_frames);
  out.radiance.reserve(spec.num_frames);
  for (int k = 0; k < spec.num_frames; ++k) {
    Image scene = background;
    for (const auto& d : spec.distractors)
      draw_object(scene, d, object_box_at(d, k, spec.width, spec.height));
    const BoundingBox tb = object_box_at(spec.target, k, spec.width, spec.height);
    draw_object(scene, spec.target, tb);

    const double light = spec.illumination_at(k);
    Image rad(1, spec.height, spec.width);
    Image frame(3, spec.height, spec.width);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        rad.at(0, y, x) = light * luminance(scene.at(0, y, x), scene.at(1, y, x), scene.at(2, y, x));
        for (int c = 0; c < 3; ++c) {
          const double v = std::clamp(light * scene.at(c, y, x) + spec.sensor_noise * noise(rng), 0.0, 1.0);
          frame.at(c, y, x) = std::round(v * 255.0) / 255.0;
        }
      }
    }
    out.frames.push_back(std::move(frame));
    out.radiance.push_back(std::move(rad));
    out.boxes.push_back(tb);
    const double vis_w = std::max(0.0, std::min(tb.x1(), double(spec.width)) - std::max(tb.x0(), 0.0));
    const double vis_h = std::max(0.0, std::min(tb.y1(), double(spec.height)) - std::max(tb.y0(), 0.0));
    out.visible.push_back(vis_w * vis_h >= 0.5 * tb.area());
    out.timestamps.push_back(k / spec.fps);
  }
  return out;
}

}  // namespace istas::eventsim
