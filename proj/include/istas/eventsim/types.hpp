#pragma once

#include <cstddef>
#include <vector>

namespace istas::eventsim {

// Axis-aligned box in continuous pixel coordinates (pixel k spans [k, k+1)).
struct BoundingBox {
  double cx = 0;
  double cy = 0;
  double w = 0;
  double h = 0;

  bool valid() const { return w > 0 && h > 0; }
  double x0() const { return cx - 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double x1() const { return cx + 0.5 * w; }
  double y1() const { return cy + 0.5 * h; }
  double area() const { return w * h; }
};

double iou(const BoundingBox& a, const BoundingBox& b);

// Channel-major C x H x W image of doubles.
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, double fill = 0.0)
      : channels_(channels), height_(height), width_(width),
        data_(static_cast<std::size_t>(channels) * height * width, fill) {}

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Image& o) const = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

struct Event {
  double t = 0;  // seconds
  int x = 0;
  int y = 0;
  int p = 1;  // +1 or -1
};

struct EventStream {
  std::vector<Event> events;
  int height = 0;
  int width = 0;
  double t_start = 0;
  double t_end = 0;

  // Throws InvariantError on unsorted timestamps, out-of-range pixels or bad polarity.
  void validate() const;
  std::size_t size() const { return events.size(); }
};

// T stacked 3-channel event frames: step t is steps[t] (3 x H x W).
struct EventTensor {
  std::vector<Image> steps;
  std::vector<double> bin_edges;  // T + 1 boundaries

  int num_steps() const { return static_cast<int>(steps.size()); }
};

}  // namespace istas::eventsim
