#pragma once

// Frame-to-frame tracking with a cached template.

#include "istas/eventsim/crop.hpp"
#include "istas/eventsim/io.hpp"
#include "istas/tracker/model.hpp"

#include <vector>

namespace istas::tracker {

// Normalized full-canvas event frames for every frame window: frame i uses
// events in [t_{i-1}, t_i); frame 0 uses [t_0, t_1).
std::vector<eventsim::EventTensor> frame_event_tensors(const eventsim::EventStream& events,
                                                       const std::vector<double>& timestamps, int steps,
                                                       double cap);

struct CropPair {
  eventsim::Image rgb;
  eventsim::EventTensor events;
  eventsim::CropTransform transform;
};

CropPair template_crop(const TrackerConfig& cfg, const eventsim::Image& frame, const eventsim::EventTensor& events,
                       const eventsim::BoundingBox& box);
CropPair search_crop(const TrackerConfig& cfg, const eventsim::Image& frame, const eventsim::EventTensor& events,
                     const eventsim::BoundingBox& center_box);

struct TrackState {
  CropPair templ;                 // cached from frame 0
  eventsim::BoundingBox previous;
  eventsim::CropTransform search_transform;
  int canvas_height = 0;
  int canvas_width = 0;
};

TrackState init_track(const TrackerConfig& cfg, const eventsim::Image& frame0, const eventsim::EventTensor& events0,
                      const eventsim::BoundingBox& b0);
// Searches around the previous box (spiking states start from zero every call).
eventsim::BoundingBox track_step(HybridModel& model, TrackState& state, const eventsim::Image& frame,
                                 const eventsim::EventTensor& events);

std::vector<eventsim::BoundingBox> track_sequence(HybridModel& model, const std::vector<eventsim::Image>& frames,
                                                  const std::vector<eventsim::EventTensor>& events,
                                                  const eventsim::BoundingBox& b0);
std::vector<eventsim::BoundingBox> track_sequence(HybridModel& model, const eventsim::SequenceData& seq);

}  // namespace istas::tracker
