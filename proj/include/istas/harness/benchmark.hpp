#pragma once

// Synthetic RGB + event tracking benchmark: scene generation per difficulty
// split, event simulation and on-disk sequence directories.

#include "istas/eventsim/io.hpp"
#include "istas/eventsim/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace istas::harness {

enum class Split { Easy, LowLight, Overexposed, FastMotion, Distractor };

std::string to_string(Split s);
Split parse_split(const std::string& s);
std::vector<Split> all_splits();

struct BenchmarkConfig {
  std::uint64_t seed = 7;
  int n_train = 60;
  int n_test = 20;
  std::vector<Split> train_mix = all_splits();  // assigned round-robin
  std::vector<Split> test_mix = all_splits();
  int num_frames = 30;
  int width = 160;
  int height = 120;
  double fps = 30;
  double contrast_threshold = 0.15;

  void validate() const;
};

// Scene seeds: train and test draw from disjoint derivation streams.
std::uint64_t scene_seed(std::uint64_t base, bool test, int index);

eventsim::SceneSpec make_scene_spec(Split split, std::uint64_t seed, int num_frames, int width, int height,
                                    double fps = 30);

eventsim::SequenceData generate_sequence(const eventsim::SceneSpec& spec, const std::string& name, Split split,
                                         double contrast_threshold);

struct BenchmarkData {
  std::vector<eventsim::SequenceData> train;
  std::vector<eventsim::SequenceData> test;
};

BenchmarkData generate_benchmark(const BenchmarkConfig& cfg);

// One half of generate_benchmark; identical sequences, lower peak memory.
std::vector<eventsim::SequenceData> generate_sequences(const BenchmarkConfig& cfg, bool test);

struct BenchmarkIndex {
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> test;
};

// Writes <out>/train/<name>/ and <out>/test/<name>/ sequence directories
// (frames/*.png, events.csv, gt.csv, scene.yaml, manifest.json).
BenchmarkIndex build_benchmark(const BenchmarkConfig& cfg, const std::filesystem::path& out);

// Every sequence directory below `dir` (sorted by name).
std::vector<eventsim::SequenceData> load_sequences(const std::filesystem::path& dir);

}  // namespace istas::harness
