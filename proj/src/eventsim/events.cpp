#include "istas/eventsim/events.hpp"

#include "istas/core/error.hpp"

#include <algorithm>
#include <cmath>

namespace istas::eventsim {

EventStream simulate_events_log(const std::vector<Image>& log_frames, const std::vector<double>& timestamps,
                                double threshold) {
  if (!(threshold > 0)) throw ConfigError("simulate_events: threshold must be positive");
  if (log_frames.size() != timestamps.size()) throw ConfigError("simulate_events: one timestamp per frame");
  EventStream out;
  if (log_frames.empty()) return out;
  const int h = log_frames.front().height();
  const int w = log_frames.front().width();
  out.height = h;
  out.width = w;
  out.t_start = timestamps.front();
  out.t_end = timestamps.back();
  if (log_frames.size() < 2) return out;
  for (const Image& f : log_frames)
    if (f.height() != h || f.width() != w || f.channels() != 1)
      throw ShapeError("simulate_events: frames must be 1 x H x W and equally sized");

  // Crossings that land within this tolerance of the threshold still fire, so
  // that e.g. a step of exactly 3 thresholds yields 3 events.
  const double tol = 1e-9 * threshold;
  std::vector<double> ref(log_frames.front().data());
  std::vector<Event> interval;
  for (std::size_t k = 0; k + 1 < log_frames.size(); ++k) {
    const double ta = timestamps[k];
    const double tb = timestamps[k + 1];
    if (tb < ta) throw ConfigError("simulate_events: timestamps must be nondecreasing");
    const auto& la = log_frames[k].data();
    const auto& lb = log_frames[k + 1].data();
    interval.clear();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double a = la[i];
        const double b = lb[i];
        double& r = ref[i];
        for (;;) {
          int pol = 0;
          if (b - r >= threshold - tol) {
            r += threshold;
            pol = 1;
          } else if (r - b >= threshold - tol) {
            r -= threshold;
            pol = -1;
          } else {
            break;
          }
          double frac = (b != a) ? (r - a) / (b - a) : 1.0;
          frac = std::clamp(frac, 0.0, 1.0);
          interval.push_back({ta + frac * (tb - ta), x, y, pol});
        }
      }
    }
    std::stable_sort(interval.begin(), interval.end(), [](const Event& p, const Event& q) { return p.t < q.t; });
    out.events.insert(out.events.end(), interval.begin(), interval.end());
  }
  return out;
}

EventStream simulate_events(const std::vector<Image>& frames, const std::vector<double>& timestamps,
                            double threshold, double log_eps) {
  std::vector<Image> logs;
  logs.reserve(frames.size());
  for (const Image& f : frames) {
    Image l(1, f.height(), f.width());
    for (int y = 0; y < f.height(); ++y) {
      for (int x = 0; x < f.width(); ++x) {
        const double lum = f.channels() >= 3
                               ? 0.299 * f.at(0, y, x) + 0.587 * f.at(1, y, x) + 0.114 * f.at(2, y, x)
                               : f.at(0, y, x);
        l.at(0, y, x) = std::log(std::max(lum, 0.0) + log_eps);
      }
    }
    logs.push_back(std::move(l));
  }
  return simulate_events_log(logs, timestamps, threshold);
}

EventTensor events_to_frames(const EventStream& stream, double t0, double t1, int steps, int height, int width,
                             double cmax) {
  if (steps <= 0) throw ConfigError("events_to_frames: T must be positive");
  if (height <= 0 || width <= 0) throw ConfigError("events_to_frames: empty frame size");
  if (!(t1 > t0)) throw ConfigError("events_to_frames: need t0 < t1");
  if (!(cmax > 0)) throw ConfigError("events_to_frames: cmax must be positive");

  EventTensor out;
  out.steps.assign(steps, Image(3, height, width));
  out.bin_edges.resize(steps + 1);
  for (int s = 0; s <= steps; ++s) out.bin_edges[s] = t0 + (t1 - t0) * s / steps;

  const double span = t1 - t0;
  for (const Event& e : stream.events) {
    if (e.t < t0 || e.t >= t1) continue;
    if (e.x < 0 || e.x >= width || e.y < 0 || e.y >= height) continue;
    const int bin = std::min(steps - 1, static_cast<int>((e.t - t0) / span * steps));
    out.steps[bin].at(e.p > 0 ? 0 : 1, e.y, e.x) += 1.0;
  }
  for (Image& img : out.steps) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double pos = img.at(0, y, x);
        const double neg = img.at(1, y, x);
        if (pos + neg == 0) continue;
        img.at(2, y, x) = 0.5 * (std::clamp(pos - neg, -cmax, cmax) + cmax);
      }
    }
  }
  return out;
}

EventTensor normalize_event_tensor(EventTensor tensor, double cap) {
  if (!(cap > 0)) throw ConfigError("normalize_event_tensor: cap must be positive");
  for (Image& img : tensor.steps)
    for (double& v : img.data()) v = std::clamp(v / cap, 0.0, 1.0);
  return tensor;
}

}  // namespace istas::eventsim
