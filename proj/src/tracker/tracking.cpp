#include "istas/tracker/tracking.hpp"

#include "istas/core/error.hpp"
#include "istas/eventsim/events.hpp"

#include <algorithm>
#include <cmath>

namespace istas::tracker {

using eventsim::BoundingBox;
using eventsim::EventTensor;
using eventsim::Image;

std::vector<EventTensor> frame_event_tensors(const eventsim::EventStream& events,
                                             const std::vector<double>& timestamps, int steps, double cap) {
  std::vector<EventTensor> out;
  if (timestamps.empty()) return out;
  const double dt = timestamps.size() > 1 ? timestamps[1] - timestamps[0] : 1.0;
  out.reserve(timestamps.size());
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    const double t0 = i == 0 ? timestamps[0] : timestamps[i - 1];
    const double t1 = i == 0 ? timestamps[0] + dt : timestamps[i];
    out.push_back(eventsim::normalize_event_tensor(
        eventsim::events_to_frames(events, t0, t1, steps, events.height, events.width), cap));
  }
  return out;
}

namespace {

CropPair make_pair(const TrackerConfig& cfg, const Image& frame, const EventTensor& events, const BoundingBox& box,
                   double context, int size) {
  CropPair p;
  p.transform = eventsim::make_crop(box, context, size, size);
  if (cfg.has_rgb()) p.rgb = eventsim::apply_crop(frame, p.transform);
  if (cfg.has_events()) p.events = eventsim::crop_events(events, p.transform);
  return p;
}

// Keeps the search box usable as a crop anchor.
BoundingBox sanitize(const BoundingBox& b, int height, int width) {
  BoundingBox r = b;
  r.cx = std::clamp(r.cx, 0.0, static_cast<double>(width));
  r.cy = std::clamp(r.cy, 0.0, static_cast<double>(height));
  r.w = std::clamp(r.w, 2.0, static_cast<double>(width));
  r.h = std::clamp(r.h, 2.0, static_cast<double>(height));
  return r;
}

}  // namespace

CropPair template_crop(const TrackerConfig& cfg, const Image& frame, const EventTensor& events,
                       const BoundingBox& box) {
  return make_pair(cfg, frame, events, box, cfg.template_context, cfg.template_size);
}

CropPair search_crop(const TrackerConfig& cfg, const Image& frame, const EventTensor& events,
                     const BoundingBox& center_box) {
  return make_pair(cfg, frame, events, center_box, cfg.search_context, cfg.search_size);
}

TrackState init_track(const TrackerConfig& cfg, const Image& frame0, const EventTensor& events0, const BoundingBox& b0) {
  if (!b0.valid()) throw ConfigError("track: initial box must have positive size");
  TrackState s;
  s.templ = template_crop(cfg, frame0, events0, b0);
  s.previous = b0;
  s.canvas_height = frame0.empty() ? events0.steps.front().height() : frame0.height();
  s.canvas_width = frame0.empty() ? events0.steps.front().width() : frame0.width();
  return s;
}

BoundingBox track_step(HybridModel& model, TrackState& state, const Image& frame, const EventTensor& events) {
  const TrackerConfig& cfg = model.config();
  const CropPair search = search_crop(cfg, frame, events, state.previous);
  const ModelInput in = make_input(cfg, state.templ.rgb, search.rgb, state.templ.events, search.events);
  ad::Tape tape(false);
  Context ctx{tape};
  const ForwardResult r = model.forward(ctx, in);
  BoundingBox box = decode_box(HeadMaps::from(r.head), cfg.search_size, search.transform);
  state.search_transform = search.transform;
  state.previous = sanitize(box, state.canvas_height, state.canvas_width);
  return box;
}

std::vector<BoundingBox> track_sequence(HybridModel& model, const std::vector<Image>& frames,
                                        const std::vector<EventTensor>& events, const BoundingBox& b0) {
  std::vector<BoundingBox> out;
  const TrackerConfig& cfg = model.config();
  const std::size_t n = cfg.has_rgb() ? frames.size() : events.size();
  if (n == 0) return out;
  if (cfg.has_rgb() && cfg.has_events() && frames.size() != events.size())
    throw ShapeError("track: frame and event window counts differ");
  static const Image no_frame;
  static const EventTensor no_events;
  auto frame_at = [&](std::size_t i) -> const Image& { return cfg.has_rgb() ? frames[i] : no_frame; };
  auto events_at = [&](std::size_t i) -> const EventTensor& { return cfg.has_events() ? events[i] : no_events; };
  TrackState state = init_track(cfg, frame_at(0), events_at(0), b0);
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(track_step(model, state, frame_at(i), events_at(i)));
  return out;
}

std::vector<BoundingBox> track_sequence(HybridModel& model, const eventsim::SequenceData& seq) {
  if (seq.frames.empty()) return {};
  if (seq.boxes.empty()) throw ConfigError("track: sequence has no initial box");
  const TrackerConfig& cfg = model.config();
  const auto events = frame_event_tensors(seq.events, seq.timestamps, cfg.steps, cfg.event_cap);
  return track_sequence(model, seq.frames, events, seq.boxes.front());
}

}  // namespace istas::tracker
