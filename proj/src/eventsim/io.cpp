#include "istas/eventsim/io.hpp"

#include "istas/core/error.hpp"

#include <json.hpp>
#include <png.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace istas::eventsim {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

void write_png(const fs::path& path, const Image& img) {
  if (img.channels() != 1 && img.channels() != 3) throw ShapeError("write_png: need 1 or 3 channels");
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  const int color = img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, img.width(), img.height(), 8, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(img.width()) * img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c)
        row[static_cast<std::size_t>(x) * img.channels() + c] =
            static_cast<png_byte>(std::lround(std::clamp(img.at(c, y, x), 0.0, 1.0) * 255.0));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const fs::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng failed reading " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = png_get_channels(png, info);
  Image img(ch >= 3 ? 3 : 1, h, w);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels(); ++c) img.at(c, y, x) = row[static_cast<std::size_t>(x) * ch + c] / 255.0;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_events_csv(const fs::path& path, const EventStream& stream) {
  auto out = open_out(path);
  out << "t,x,y,p\n";
  for (const Event& e : stream.events) out << e.t << ',' << e.x << ',' << e.y << ',' << e.p << '\n';
}

EventStream read_events_csv(const fs::path& path, int height, int width) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,x,y,p", 0) != 0) throw IoError(path.string() + ": missing t,x,y,p header");
  EventStream s;
  s.height = height;
  s.width = width;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 4) throw IoError(path.string() + ": malformed row '" + line + "'");
    s.events.push_back({std::stod(cells[0]), std::stoi(cells[1]), std::stoi(cells[2]), std::stoi(cells[3])});
  }
  if (!s.events.empty()) {
    s.t_start = s.events.front().t;
    s.t_end = s.events.back().t;
  }
  s.validate();
  return s;
}

void write_boxes_csv(const fs::path& path, const std::vector<BoundingBox>& boxes) {
  auto out = open_out(path);
  out << "frame,cx,cy,w,h\n";
  for (std::size_t i = 0; i < boxes.size(); ++i)
    out << i << ',' << boxes[i].cx << ',' << boxes[i].cy << ',' << boxes[i].w << ',' << boxes[i].h << '\n';
}

std::vector<BoundingBox> read_boxes_csv(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("frame,cx,cy,w,h", 0) != 0)
    throw IoError(path.string() + ": missing frame,cx,cy,w,h header");
  std::vector<std::pair<long, BoundingBox>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() < 5) throw IoError(path.string() + ": malformed row '" + line + "'");
    rows.push_back({std::stol(c[0]), {std::stod(c[1]), std::stod(c[2]), std::stod(c[3]), std::stod(c[4])}});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<BoundingBox> out;
  for (const auto& r : rows) out.push_back(r.second);
  return out;
}

namespace {

std::string shape_name(ShapeKind k) { return k == ShapeKind::Ellipse ? "ellipse" : "rectangle"; }

ShapeKind parse_shape(const std::string& s) {
  if (s == "rectangle") return ShapeKind::Rectangle;
  if (s == "ellipse") return ShapeKind::Ellipse;
  throw ConfigError("scene: unknown shape '" + s + "'");
}

void check_keys(const YAML::Node& n, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!n.IsMap()) throw ConfigError("scene: " + where + " must be a mapping");
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("scene: unknown key '" + key + "' in " + where);
  }
}

MovingObject parse_object(const YAML::Node& n) {
  MovingObject o;
  if (!n) return o;
  check_keys(n, {"shape", "color", "box", "vx", "vy", "scale_rate"}, "object");
  if (n["shape"]) o.shape = parse_shape(n["shape"].as<std::string>());
  if (n["color"]) {
    auto v = n["color"].as<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("scene: color needs three components");
    o.color = {v[0], v[1], v[2]};
  }
  if (n["box"]) {
    auto v = n["box"].as<std::vector<double>>();
    if (v.size() != 4) throw ConfigError("scene: box is [cx, cy, w, h]");
    o.start = {v[0], v[1], v[2], v[3]};
  }
  o.vx = n["vx"].as<double>(o.vx);
  o.vy = n["vy"].as<double>(o.vy);
  o.scale_rate = n["scale_rate"].as<double>(o.scale_rate);
  return o;
}

void emit_object(YAML::Emitter& e, const MovingObject& o) {
  e << YAML::BeginMap;
  e << YAML::Key << "shape" << YAML::Value << shape_name(o.shape);
  e << YAML::Key << "color" << YAML::Value << YAML::Flow
    << std::vector<double>{o.color[0], o.color[1], o.color[2]};
  e << YAML::Key << "box" << YAML::Value << YAML::Flow
    << std::vector<double>{o.start.cx, o.start.cy, o.start.w, o.start.h};
  e << YAML::Key << "vx" << YAML::Value << o.vx;
  e << YAML::Key << "vy" << YAML::Value << o.vy;
  e << YAML::Key << "scale_rate" << YAML::Value << o.scale_rate;
  e << YAML::EndMap;
}

}  // namespace

namespace {

void parse_spec_fields(const YAML::Node& root, SceneSpec& s) {
  s.width = root["width"].as<int>(s.width);
  s.height = root["height"].as<int>(s.height);
  s.fps = root["fps"].as<double>(s.fps);
  s.num_frames = root["num_frames"].as<int>(s.num_frames);
  s.seed = root["seed"].as<std::uint64_t>(s.seed);
  s.illumination = root["illumination"].as<double>(s.illumination);
  s.sensor_noise = root["sensor_noise"].as<double>(s.sensor_noise);
  if (root["target"]) s.target = parse_object(root["target"]);
  if (root["distractors"])
    for (const auto& d : root["distractors"]) s.distractors.push_back(parse_object(d));
  if (root["episodes"]) {
    for (const auto& e : root["episodes"]) {
      check_keys(e, {"first", "last", "level"}, "episode");
      s.episodes.push_back({e["first"].as<int>(), e["last"].as<int>(), e["level"].as<double>()});
    }
  }
}

}  // namespace

SceneSpec load_scene_spec(const fs::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& ex) {
    throw IoError("scene spec " + path.string() + ": " + ex.what());
  }
  SceneSpec s;
  if (root && !root.IsNull()) {
    try {
      check_keys(root,
                 {"width", "height", "fps", "num_frames", "seed", "illumination", "sensor_noise", "target",
                  "distractors", "episodes"},
                 "scene spec");
      parse_spec_fields(root, s);
    } catch (const YAML::Exception& ex) {
      throw ConfigError("scene spec " + path.string() + ": " + ex.what());
    }
  }
  s.validate();
  return s;
}

void save_scene_spec(const fs::path& path, const SceneSpec& s) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "width" << YAML::Value << s.width;
  e << YAML::Key << "height" << YAML::Value << s.height;
  e << YAML::Key << "fps" << YAML::Value << s.fps;
  e << YAML::Key << "num_frames" << YAML::Value << s.num_frames;
  e << YAML::Key << "seed" << YAML::Value << s.seed;
  e << YAML::Key << "illumination" << YAML::Value << s.illumination;
  e << YAML::Key << "sensor_noise" << YAML::Value << s.sensor_noise;
  e << YAML::Key << "target" << YAML::Value;
  emit_object(e, s.target);
  e << YAML::Key << "distractors" << YAML::Value << YAML::BeginSeq;
  for (const auto& d : s.distractors) emit_object(e, d);
  e << YAML::EndSeq;
  e << YAML::Key << "episodes" << YAML::Value << YAML::BeginSeq;
  for (const auto& ep : s.episodes) {
    e << YAML::Flow << YAML::BeginMap << YAML::Key << "first" << YAML::Value << ep.first << YAML::Key << "last"
      << YAML::Value << ep.last << YAML::Key << "level" << YAML::Value << ep.level << YAML::EndMap;
  }
  e << YAML::EndSeq;
  e << YAML::EndMap;
  auto out = open_out(path);
  out << e.c_str() << '\n';
}

void write_sequence(const fs::path& dir, const SequenceData& seq) {
  fs::create_directories(dir / "frames");
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << i << ".png";
    write_png(dir / "frames" / name.str(), seq.frames[i]);
  }
  write_events_csv(dir / "events.csv", seq.events);
  write_boxes_csv(dir / "gt.csv", seq.boxes);
  nlohmann::json m;
  m["name"] = seq.name;
  m["split"] = seq.split;
  m["num_frames"] = seq.frames.size();
  m["height"] = seq.frames.empty() ? seq.events.height : seq.frames.front().height();
  m["width"] = seq.frames.empty() ? seq.events.width : seq.frames.front().width();
  m["timestamps"] = seq.timestamps;
  std::vector<std::size_t> hidden;
  for (std::size_t i = 0; i < seq.visible.size(); ++i)
    if (!seq.visible[i]) hidden.push_back(i);
  m["out_of_view"] = hidden;
  auto out = open_out(dir / "manifest.json");
  out << m.dump(2) << '\n';
}

SequenceData read_sequence(const fs::path& dir) {
  auto in = open_in(dir / "manifest.json");
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("manifest " + (dir / "manifest.json").string() + ": " + ex.what());
  }
  SequenceData seq;
  seq.name = m.value("name", dir.filename().string());
  seq.split = m.value("split", "");
  const int n = m.at("num_frames").get<int>();
  const int h = m.at("height").get<int>();
  const int w = m.at("width").get<int>();
  seq.timestamps = m.at("timestamps").get<std::vector<double>>();
  for (int i = 0; i < n; ++i) {
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << i << ".png";
    seq.frames.push_back(read_png(dir / "frames" / name.str()));
  }
  seq.events = read_events_csv(dir / "events.csv", h, w);
  if (!seq.timestamps.empty()) {
    seq.events.t_start = seq.timestamps.front();
    seq.events.t_end = seq.timestamps.back();
  }
  seq.boxes = read_boxes_csv(dir / "gt.csv");
  seq.visible.assign(seq.boxes.size(), true);
  for (auto i : m.value("out_of_view", std::vector<std::size_t>{}))
    if (i < seq.visible.size()) seq.visible[i] = false;
  return seq;
}

}  // namespace istas::eventsim
