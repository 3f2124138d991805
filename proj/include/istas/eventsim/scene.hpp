#pragma once

#include "istas/eventsim/types.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace istas::eventsim {

enum class ShapeKind { Rectangle, Ellipse };

struct MovingObject {
  ShapeKind shape = ShapeKind::Rectangle;
  std::array<double, 3> color{0.9, 0.2, 0.15};
  BoundingBox start{80, 60, 20, 20};
  double vx = 0;          // px / frame
  double vy = 0;          // px / frame
  double scale_rate = 1;  // multiplicative size change per frame
};

// A span of frames [first, last] lit at `level` times the nominal illumination.
struct LightEpisode {
  int first = 0;
  int last = 0;
  double level = 1;
};

struct SceneSpec {
  int width = 160;
  int height = 120;
  double fps = 30;
  int num_frames = 30;
  MovingObject target;
  std::vector<MovingObject> distractors;
  std::uint64_t seed = 0;
  // Nominal scene illumination multiplier; episodes override it per frame.
  double illumination = 1.0;
  std::vector<LightEpisode> episodes;
  // Additive Gaussian read noise of the RGB sensor (after illumination).
  double sensor_noise = 0.01;

  // Throws ConfigError when the spec cannot be rendered.
  void validate() const;
  double illumination_at(int frame) const;
};

struct RenderedScene {
  std::vector<Image> frames;     // 3 x H x W sensor output, 8-bit quantized in [0, 1]
  std::vector<Image> radiance;   // 1 x H x W linear luminance seen by the event sensor
  std::vector<BoundingBox> boxes;
  std::vector<bool> visible;
  std::vector<double> timestamps;
};

// Renders the scene deterministically from (spec, spec.seed).
RenderedScene render_scene(const SceneSpec& spec);

// Box of a moving object at frame k (reflecting off the canvas borders).
BoundingBox object_box_at(const MovingObject& obj, int frame, int width, int height);

}  // namespace istas::eventsim
