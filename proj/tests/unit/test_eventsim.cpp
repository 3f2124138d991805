#include "istas/core/error.hpp"
#include "istas/eventsim/crop.hpp"
#include "istas/eventsim/events.hpp"
#include "istas/eventsim/io.hpp"
#include "istas/eventsim/scene.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace istas;
using namespace istas::eventsim;
namespace fs = std::filesystem;

namespace {

SceneSpec square_spec(double vx, int frames) {
  SceneSpec s;
  s.num_frames = frames;
  s.target.start = {60, 50, 20, 20};
  s.target.vx = vx;
  s.sensor_noise = 0;
  return s;
}

Image scalar_image(double v) {
  Image img(1, 1, 1);
  img.at(0, 0, 0) = v;
  return img;
}

std::vector<Image> random_log_video(std::uint64_t seed, int frames, int h, int w) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.5);
  std::vector<Image> out;
  for (int k = 0; k < frames; ++k) {
    Image img(1, h, w);
    for (double& v : img.data()) v = g(rng);
    out.push_back(img);
  }
  return out;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("istas_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(RenderScene, StationarySquareKeepsIdenticalBoxes) {
  const auto r = render_scene(square_spec(0, 10));
  ASSERT_EQ(r.boxes.size(), 10u);
  for (const auto& b : r.boxes) {
    EXPECT_EQ(b.cx, r.boxes[0].cx);
    EXPECT_EQ(b.cy, r.boxes[0].cy);
    EXPECT_EQ(b.w, r.boxes[0].w);
    EXPECT_EQ(b.h, r.boxes[0].h);
  }
}

TEST(RenderScene, LinearMotionAdvancesTwoPixelsPerFrame) {
  const auto r = render_scene(square_spec(2, 10));
  for (std::size_t k = 1; k < r.boxes.size(); ++k) EXPECT_NEAR(r.boxes[k].cx - r.boxes[k - 1].cx, 2.0, 1e-12);
}

TEST(RenderScene, SameSeedIsBitIdentical) {
  auto spec = square_spec(1.5, 6);
  spec.sensor_noise = 0.02;
  spec.seed = 11;
  const auto a = render_scene(spec);
  const auto b = render_scene(spec);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t k = 0; k < a.frames.size(); ++k) EXPECT_TRUE(a.frames[k] == b.frames[k]);
}

TEST(RenderScene, InvalidSpecThrows) {
  auto spec = square_spec(0, 5);
  spec.fps = 0;
  EXPECT_THROW(render_scene(spec), ConfigError);
}

TEST(SimulateEvents, ConstantVideoIsSilent) {
  std::vector<Image> frames(5, Image(1, 4, 4, 0.3));
  const auto s = simulate_events_log(frames, {0, 1, 2, 3, 4}, 0.2);
  EXPECT_EQ(s.size(), 0u);
}

TEST(SimulateEvents, StepOfThreeThresholdsGivesThreePositiveEvents) {
  const auto s = simulate_events_log({scalar_image(0.0), scalar_image(0.6)}, {0.0, 1.0}, 0.2);
  ASSERT_EQ(s.size(), 3u);
  for (const auto& e : s.events) {
    EXPECT_EQ(e.p, 1);
    EXPECT_EQ(e.x, 0);
    EXPECT_EQ(e.y, 0);
  }
}

TEST(SimulateEvents, SingleFrameGivesEmptyStream) {
  EXPECT_EQ(simulate_events_log({scalar_image(1.0)}, {0.0}, 0.2).size(), 0u);
}

TEST(SimulateEvents, InvertingTheVideoInvertsEveryPolarity) {
  const auto video = random_log_video(3, 6, 5, 7);
  std::vector<Image> inverted = video;
  for (auto& f : inverted)
    for (double& v : f.data()) v = -v;
  const std::vector<double> ts{0, 0.1, 0.2, 0.3, 0.4, 0.5};
  const auto a = simulate_events_log(video, ts, 0.15);
  const auto b = simulate_events_log(inverted, ts, 0.15);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_GT(a.size(), 0u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.events[i].x, b.events[i].x);
    EXPECT_EQ(a.events[i].y, b.events[i].y);
    EXPECT_EQ(a.events[i].p, -b.events[i].p);
  }
  // The binned tensors swap channels 0 and 1.
  const auto fa = events_to_frames(a, 0, 0.6, 3, 5, 7);
  const auto fb = events_to_frames(b, 0, 0.6, 3, 5, 7);
  for (int t = 0; t < 3; ++t)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 7; ++x) {
        EXPECT_EQ(fa.steps[t].at(0, y, x), fb.steps[t].at(1, y, x));
        EXPECT_EQ(fa.steps[t].at(1, y, x), fb.steps[t].at(0, y, x));
      }
}

TEST(SimulateEvents, StreamSatisfiesInvariants) {
  const auto s = simulate_events_log(random_log_video(5, 8, 6, 6), {0, 1, 2, 3, 4, 5, 6, 7}, 0.1);
  EXPECT_NO_THROW(s.validate());
}

TEST(EventsToFrames, EmptyStreamGivesZeros) {
  EventStream s;
  s.height = 4;
  s.width = 5;
  const auto f = events_to_frames(s, 0, 1, 3, 4, 5);
  ASSERT_EQ(f.num_steps(), 3);
  for (const auto& step : f.steps)
    for (double v : step.data()) EXPECT_EQ(v, 0.0);
}

TEST(EventsToFrames, SinglePositiveEventLandsInBinZero) {
  EventStream s;
  s.height = 4;
  s.width = 5;
  s.events.push_back({0.1, 3, 2, 1});
  const auto f = events_to_frames(s, 0, 1, 3, 4, 5);
  for (int t = 0; t < 3; ++t)
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) EXPECT_EQ(f.steps[t].at(c, y, x), (t == 0 && c == 0 && y == 2 && x == 3) ? 1 : 0);
}

TEST(EventsToFrames, EventsOutsideWindowAreIgnored) {
  EventStream s;
  s.height = 2;
  s.width = 2;
  s.events = {{-0.1, 0, 0, 1}, {0.5, 1, 1, -1}, {1.0, 0, 1, 1}};
  const auto f = events_to_frames(s, 0, 1, 2, 2, 2);
  double total = 0;
  for (const auto& step : f.steps)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) total += step.at(0, y, x) + step.at(1, y, x);
  EXPECT_EQ(total, 1.0);
}

TEST(EventsToFrames, CountConservationAndAdditivity) {
  const auto s = simulate_events_log(random_log_video(9, 6, 6, 8), {0, 0.1, 0.2, 0.3, 0.4, 0.5}, 0.1);
  EventStream first = s, second = s;
  std::erase_if(first.events, [](const Event& e) { return e.t >= 0.25; });
  std::erase_if(second.events, [](const Event& e) { return e.t < 0.25; });
  const auto whole = events_to_frames(s, 0, 0.5, 2, 6, 8);
  const auto a = events_to_frames(first, 0, 0.5, 2, 6, 8);
  const auto b = events_to_frames(second, 0, 0.5, 2, 6, 8);
  double total = 0;
  for (int t = 0; t < 2; ++t)
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 8; ++x) {
          EXPECT_EQ(whole.steps[t].at(c, y, x), a.steps[t].at(c, y, x) + b.steps[t].at(c, y, x));
          total += whole.steps[t].at(c, y, x);
        }
  std::size_t in_window = 0;
  for (const auto& e : s.events) in_window += e.t >= 0 && e.t < 0.5;
  EXPECT_EQ(total, static_cast<double>(in_window));
}

TEST(EventsToFrames, BadArgumentsThrow) {
  EventStream s;
  EXPECT_THROW(events_to_frames(s, 0, 1, 0, 4, 4), ConfigError);
  EXPECT_THROW(events_to_frames(s, 0, 1, 2, 0, 4), ConfigError);
}

TEST(CropResize, ContextCoveringCenteredBoxIsIdentity) {
  Image img(3, 20, 20);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (double& v : img.data()) v = u(rng);
  const auto r = crop_resize(img, {10, 10, 20, 20}, 1.0, 20, 20);
  for (std::size_t i = 0; i < img.data().size(); ++i) EXPECT_NEAR(r.image.data()[i], img.data()[i], 1e-12);
}

TEST(CropResize, CornerBoxIsZeroPaddedOutsideCanvas) {
  const Image img(3, 20, 20, 1.0);
  const auto r = crop_resize(img, {0, 0, 10, 10}, 2.0, 20, 20);
  // The crop spans [-10, 10) on both axes; its top-left quadrant lies off canvas.
  EXPECT_EQ(r.image.at(0, 2, 2), 0.0);
  EXPECT_EQ(r.image.at(0, 15, 15), 1.0);
}

TEST(CropResize, InverseTransformRecoversBox) {
  const BoundingBox b{37.3, 22.9, 14.2, 19.5};
  const Image img(3, 60, 80, 0.5);
  const auto r = crop_resize(img, {40, 25, 16, 18}, 4.0, 128, 128);
  const auto back = r.transform.to_canvas(r.transform.to_crop(b));
  EXPECT_LT(std::abs(back.cx - b.cx), 0.5);
  EXPECT_LT(std::abs(back.cy - b.cy), 0.5);
  EXPECT_LT(std::abs(back.w - b.w), 0.5);
  EXPECT_LT(std::abs(back.h - b.h), 0.5);
}

TEST(CropResize, DegenerateBoxThrows) {
  const Image img(3, 10, 10);
  EXPECT_THROW(crop_resize(img, {5, 5, 0, 3}, 2.0, 8, 8), ConfigError);
}

TEST(Io, EventsCsvRoundTrip) {
  const auto dir = temp_dir("events");
  const auto s = simulate_events_log(random_log_video(2, 4, 5, 6), {0, 0.1, 0.2, 0.3}, 0.2);
  write_events_csv(dir / "events.csv", s);
  const auto back = read_events_csv(dir / "events.csv", 5, 6);
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_DOUBLE_EQ(back.events[i].t, s.events[i].t);
    EXPECT_EQ(back.events[i].x, s.events[i].x);
    EXPECT_EQ(back.events[i].p, s.events[i].p);
  }
}

TEST(Io, SequenceAndSceneSpecRoundTrip) {
  const auto dir = temp_dir("sequence");
  auto spec = square_spec(1, 4);
  spec.distractors.push_back(spec.target);
  spec.distractors[0].start.cx = 120;
  spec.episodes.push_back({1, 2, 0.1});
  const auto scene = render_scene(spec);
  SequenceData seq;
  seq.name = "s";
  seq.split = "easy";
  seq.frames = scene.frames;
  seq.timestamps = scene.timestamps;
  seq.boxes = scene.boxes;
  seq.visible = scene.visible;
  seq.visible[2] = false;
  seq.events = simulate_events(scene.radiance, scene.timestamps, 0.15);
  write_sequence(dir, seq);
  save_scene_spec(dir / "scene.yaml", spec);
  const auto back = read_sequence(dir);
  ASSERT_EQ(back.frames.size(), 4u);
  EXPECT_EQ(back.split, "easy");
  EXPECT_FALSE(back.visible[2]);
  EXPECT_EQ(back.events.size(), seq.events.size());
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(back.boxes[k].cx, seq.boxes[k].cx, 1e-9);
  const auto spec_back = load_scene_spec(dir / "scene.yaml");
  EXPECT_EQ(spec_back.distractors.size(), 1u);
  EXPECT_EQ(spec_back.episodes.size(), 1u);
  EXPECT_DOUBLE_EQ(spec_back.target.vx, 1.0);
  const auto r1 = render_scene(spec);
  const auto r2 = render_scene(spec_back);
  for (std::size_t k = 0; k < r1.frames.size(); ++k) EXPECT_TRUE(r1.frames[k] == r2.frames[k]);
}

TEST(Io, PngRoundTripQuantizes) {
  const auto dir = temp_dir("png");
  Image img(3, 4, 5);
  for (std::size_t i = 0; i < img.data().size(); ++i) img.data()[i] = static_cast<double>(i % 256) / 255.0;
  write_png(dir / "a.png", img);
  const auto back = read_png(dir / "a.png");
  ASSERT_EQ(back.channels(), 3);
  for (std::size_t i = 0; i < img.data().size(); ++i) EXPECT_NEAR(back.data()[i], img.data()[i], 1e-12);
}

TEST(Io, UnknownSceneKeyIsRejected) {
  const auto dir = temp_dir("badspec");
  {
    std::ofstream(dir / "s.yaml") << "width: 100\nbogus_key: 3\n";
  }
  EXPECT_THROW(load_scene_spec(dir / "s.yaml"), ConfigError);
}
