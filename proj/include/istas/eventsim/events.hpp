#pragma once

#include "istas/eventsim/types.hpp"

#include <vector>

namespace istas::eventsim {

// Events from a log-intensity video (1 x H x W per frame). Each pixel keeps a
// reference level; every crossing of reference +/- threshold emits one event
// and moves the reference by one threshold. Event times are interpolated
// linearly inside the frame interval.
EventStream simulate_events_log(const std::vector<Image>& log_frames,
                                const std::vector<double>& timestamps, double threshold);

// Same as simulate_events_log on log(luminance + eps) of RGB or single-channel frames.
EventStream simulate_events(const std::vector<Image>& frames, const std::vector<double>& timestamps,
                            double threshold, double log_eps = 1e-3);

// Bins events in [t0, t1) into T equal intervals on an H x W canvas.
// Channel 0: positive count, channel 1: negative count, channel 2: at pixels
// with any event, (clamp(pos - neg, -cmax, cmax) + cmax) / 2, else 0.
EventTensor events_to_frames(const EventStream& stream, double t0, double t1, int steps, int height,
                             int width, double cmax = 5.0);

// Divides every channel by `cap` and clips to [0, 1].
EventTensor normalize_event_tensor(EventTensor tensor, double cap = 5.0);

}  // namespace istas::eventsim
