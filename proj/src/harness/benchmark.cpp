#include "istas/harness/benchmark.hpp"

#include "istas/core/error.hpp"
#include "istas/eventsim/events.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace istas::harness {

namespace fs = std::filesystem;
using eventsim::BoundingBox;
using eventsim::MovingObject;
using eventsim::SceneSpec;

std::string to_string(Split s) {
  switch (s) {
    case Split::Easy: return "easy";
    case Split::LowLight: return "low_light";
    case Split::Overexposed: return "overexposed";
    case Split::FastMotion: return "fast_motion";
    case Split::Distractor: return "distractor";
  }
  return "easy";
}

Split parse_split(const std::string& s) {
  for (Split v : all_splits())
    if (to_string(v) == s) return v;
  throw ConfigError("unknown split '" + s + "' (easy | low_light | overexposed | fast_motion | distractor)");
}

std::vector<Split> all_splits() {
  return {Split::Easy, Split::LowLight, Split::Overexposed, Split::FastMotion, Split::Distractor};
}

void BenchmarkConfig::validate() const {
  if (n_train < 0 || n_test < 0 || n_train + n_test == 0) throw ConfigError("benchmark: sequence counts must be positive");
  if ((n_train > 0 && train_mix.empty()) || (n_test > 0 && test_mix.empty()))
    throw ConfigError("benchmark: split mix must be nonempty");
  if (num_frames < 2) throw ConfigError("benchmark: sequences need at least two frames");
  if (width < 32 || height < 32) throw ConfigError("benchmark: canvas too small");
  if (!(fps > 0) || !(contrast_threshold > 0)) throw ConfigError("benchmark: fps and contrast threshold must be positive");
}

std::uint64_t scene_seed(std::uint64_t base, bool test, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(test ? 0x7e57u : 0x74a1u), static_cast<std::uint32_t>(index)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

std::array<double, 3> hue_color(double hue, double sat) {
  const double h = hue * 6.0;
  const int i = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = 1 - sat, q = 1 - sat * f, t = 1 - sat * (1 - f);
  switch (i) {
    case 0: return {1, t, p};
    case 1: return {q, 1, p};
    case 2: return {p, 1, t};
    case 3: return {p, q, 1};
    case 4: return {t, p, 1};
    default: return {1, p, q};
  }
}

// Target colours are either clearly brighter or clearly darker than the
// mid-grey background so that motion produces events.
std::array<double, 3> object_color(std::mt19937_64& rng, double hue, bool bright) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto c = hue_color(hue, 0.55 + 0.3 * u(rng));
  const double lum = 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
  const double want = bright ? 0.78 + 0.12 * u(rng) : 0.07 + 0.08 * u(rng);
  for (double& v : c) v = std::clamp(v * want / lum, 0.0, 1.0);
  return c;
}

MovingObject random_object(std::mt19937_64& rng, int width, int height, double speed_lo, double speed_hi, double hue,
                           bool bright) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MovingObject o;
  o.shape = u(rng) < 0.5 ? eventsim::ShapeKind::Rectangle : eventsim::ShapeKind::Ellipse;
  o.color = object_color(rng, hue, bright);
  o.start.w = 16 + 12 * u(rng);
  o.start.h = 16 + 12 * u(rng);
  o.start.cx = o.start.w + (width - 2 * o.start.w) * u(rng);
  o.start.cy = o.start.h + (height - 2 * o.start.h) * u(rng);
  const double angle = 2 * M_PI * u(rng);
  const double speed = speed_lo + (speed_hi - speed_lo) * u(rng);
  o.vx = speed * std::cos(angle);
  o.vy = speed * std::sin(angle);
  o.scale_rate = 0.995 + 0.01 * u(rng);
  return o;
}

}  // namespace

SceneSpec make_scene_spec(Split split, std::uint64_t seed, int num_frames, int width, int height, double fps) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SceneSpec s;
  s.width = width;
  s.height = height;
  s.fps = fps;
  s.num_frames = num_frames;
  s.seed = seed;
  s.sensor_noise = 0.01;
  const double hue = u(rng);
  const bool bright = u(rng) < 0.5;
  const bool fast = split == Split::FastMotion;
  s.target = random_object(rng, width, height, fast ? 4.0 : 0.5, fast ? 6.0 : 1.5, hue, bright);
  switch (split) {
    case Split::LowLight:
      s.illumination = 0.02 + 0.03 * u(rng);
      break;
    case Split::Overexposed:
      s.illumination = 3.0 + 2.0 * u(rng);
      break;
    case Split::Distractor:
      for (int k = 0; k < 2; ++k) {
        const double dh = std::fmod(hue + 0.1 * (u(rng) - 0.5) + 1.0, 1.0);
        s.distractors.push_back(random_object(rng, width, height, 0.5, 1.5, dh, bright));
      }
      break;
    default:
      break;
  }
  s.validate();
  return s;
}

eventsim::SequenceData generate_sequence(const SceneSpec& spec, const std::string& name, Split split,
                                         double contrast_threshold) {
  const auto scene = eventsim::render_scene(spec);
  eventsim::SequenceData seq;
  seq.name = name;
  seq.split = to_string(split);
  seq.frames = scene.frames;
  seq.timestamps = scene.timestamps;
  seq.boxes = scene.boxes;
  seq.visible = scene.visible;
  seq.events = eventsim::simulate_events(scene.radiance, scene.timestamps, contrast_threshold);
  return seq;
}

namespace {

std::string sequence_name(Split split, bool test, int index) {
  std::ostringstream os;
  os << (test ? "test_" : "train_") << to_string(split) << '_' << std::setw(3) << std::setfill('0') << index;
  return os.str();
}

template <typename Fn>
void for_each_sequence(const BenchmarkConfig& cfg, Fn&& fn) {
  for (int pass = 0; pass < 2; ++pass) {
    const bool test = pass == 1;
    const int n = test ? cfg.n_test : cfg.n_train;
    const auto& mix = test ? cfg.test_mix : cfg.train_mix;
    for (int i = 0; i < n; ++i) {
      const Split split = mix[static_cast<std::size_t>(i) % mix.size()];
      const auto spec = make_scene_spec(split, scene_seed(cfg.seed, test, i), cfg.num_frames, cfg.width, cfg.height,
                                        cfg.fps);
      fn(test, spec, sequence_name(split, test, i), split);
    }
  }
}

}  // namespace

BenchmarkData generate_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();
  BenchmarkData data;
  for_each_sequence(cfg, [&](bool test, const SceneSpec& spec, const std::string& name, Split split) {
    (test ? data.test : data.train).push_back(generate_sequence(spec, name, split, cfg.contrast_threshold));
  });
  return data;
}

std::vector<eventsim::SequenceData> generate_sequences(const BenchmarkConfig& cfg, bool test) {
  cfg.validate();
  std::vector<eventsim::SequenceData> out;
  for_each_sequence(cfg, [&](bool is_test, const SceneSpec& spec, const std::string& name, Split split) {
    if (is_test == test) out.push_back(generate_sequence(spec, name, split, cfg.contrast_threshold));
  });
  return out;
}

BenchmarkIndex build_benchmark(const BenchmarkConfig& cfg, const fs::path& out) {
  cfg.validate();
  BenchmarkIndex index;
  for_each_sequence(cfg, [&](bool test, const SceneSpec& spec, const std::string& name, Split split) {
    const fs::path dir = out / (test ? "test" : "train") / name;
    eventsim::write_sequence(dir, generate_sequence(spec, name, split, cfg.contrast_threshold));
    eventsim::save_scene_spec(dir / "scene.yaml", spec);
    (test ? index.test : index.train).push_back(dir);
  });
  return index;
}

std::vector<eventsim::SequenceData> load_sequences(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("no sequence directory at " + dir.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<eventsim::SequenceData> out;
  for (const auto& d : dirs) out.push_back(eventsim::read_sequence(d));
  return out;
}

}  // namespace istas::harness
