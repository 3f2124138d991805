#pragma once

#include "istas/eventsim/scene.hpp"
#include "istas/eventsim/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace istas::eventsim {

// 8-bit RGB (3 channels) or grayscale (1 channel) PNG, values in [0, 1].
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

// CSV with header `t,x,y,p`.
void write_events_csv(const std::filesystem::path& path, const EventStream& stream);
EventStream read_events_csv(const std::filesystem::path& path, int height, int width);

// CSV with header `frame,cx,cy,w,h`.
void write_boxes_csv(const std::filesystem::path& path, const std::vector<BoundingBox>& boxes);
std::vector<BoundingBox> read_boxes_csv(const std::filesystem::path& path);

// YAML scene description; every key is optional and defaults to SceneSpec{}.
SceneSpec load_scene_spec(const std::filesystem::path& path);
void save_scene_spec(const std::filesystem::path& path, const SceneSpec& spec);

// A sequence directory on disk:
//   frames/000000.png ..., events.csv, gt.csv, manifest.json
struct SequenceData {
  std::string name;
  std::vector<Image> frames;
  std::vector<double> timestamps;
  EventStream events;
  std::vector<BoundingBox> boxes;
  std::vector<bool> visible;
  std::string split;
};

void write_sequence(const std::filesystem::path& dir, const SequenceData& seq);
SequenceData read_sequence(const std::filesystem::path& dir);

}  // namespace istas::eventsim
