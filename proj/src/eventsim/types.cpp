#include "istas/eventsim/types.hpp"

#include "istas/core/error.hpp"

#include <algorithm>
#include <string>

namespace istas::eventsim {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const double ih = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

void EventStream::validate() const {
  double prev = -1e300;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.t < prev) throw InvariantError("event stream: timestamps decrease at index " + std::to_string(i));
    if (e.x < 0 || e.x >= width || e.y < 0 || e.y >= height)
      throw InvariantError("event stream: pixel out of range at index " + std::to_string(i));
    if (e.p != 1 && e.p != -1) throw InvariantError("event stream: polarity must be +1 or -1");
    prev = e.t;
  }
}

}  // namespace istas::eventsim
