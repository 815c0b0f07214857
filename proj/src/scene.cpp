#include "sodetr/scene.hpp"

#include "sodetr/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>

namespace sodetr {

void SceneConfig::validate() const {
  if (image_size <= 0 || image_size % 32 != 0) throw ConfigError("image_size must be a positive multiple of 32");
  if (classes < 1) throw ConfigError("classes must be at least 1");
  if (min_objects < 0 || max_objects < min_objects) throw ConfigError("objects_per_image range is invalid");
  if (min_side < 2 || max_side < min_side) throw ConfigError("object_side range is invalid");
  if (max_side * 4 >= image_size) throw ConfigError("object_side max must stay below image_size / 4");
  if (!(clutter_level >= 0 && clutter_level <= 1)) throw ConfigError("clutter_level must lie in [0, 1]");
  if (!(max_overlap_iou >= 0 && max_overlap_iou < 1)) throw ConfigError("max_overlap_iou must lie in [0, 1)");
}

namespace {

constexpr int kPlacementTries = 200;
constexpr int kSceneAttempts = 64;

double texture(int label, int x, int y, double shade) {
  const double hi = 0.95 - shade, lo = 0.05 + shade;
  switch (label % 3) {
    case 0: return hi;
    case 1: return (y % 2 == 0) ? hi : lo;
    default: return ((x + y) % 2 == 0) ? hi : lo;
  }
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

bool try_scene(const SceneConfig& cfg, Rng& rng, Scene& out) {
  const int s = cfg.image_size;
  std::vector<double> img(static_cast<std::size_t>(s) * s);
  for (double& v : img) v = 0.35 + 0.05 * rng.normal();

  // Clutter: untextured blobs of mid intensity.
  const int blobs = static_cast<int>(std::lround(cfg.clutter_level * 20.0));
  for (int b = 0; b < blobs; ++b) {
    const int bw = rng.uniform_int(2, 6), bh = rng.uniform_int(2, 6);
    const int x0 = rng.uniform_int(0, s - bw), y0 = rng.uniform_int(0, s - bh);
    const double level = rng.uniform(0.45, 0.65);
    for (int y = y0; y < y0 + bh; ++y)
      for (int x = x0; x < x0 + bw; ++x) img[std::size_t(y) * s + x] = level + 0.03 * rng.normal();
  }

  const int count = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  std::vector<Annotation> anns;
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementTries && !placed; ++attempt) {
      const int w = rng.uniform_int(cfg.min_side, cfg.max_side), h = rng.uniform_int(cfg.min_side, cfg.max_side);
      const int x0 = rng.uniform_int(0, s - w), y0 = rng.uniform_int(0, s - h);
      const BoxD box{(x0 + w * 0.5) / s, (y0 + h * 0.5) / s, double(w) / s, double(h) / s};
      const bool clear = std::all_of(anns.begin(), anns.end(),
                                     [&](const Annotation& a) { return iou(a.box, box) <= cfg.max_overlap_iou; });
      if (!clear) continue;
      const int label = rng.uniform_int(0, cfg.classes - 1);
      const double shade = 0.1 * (label / 3);
      for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) img[std::size_t(y) * s + x] = texture(label, x - x0, y - y0, shade);
      anns.push_back({box, label});
      placed = true;
    }
    if (!placed) return false;
  }
  out.image_size = s;
  out.pixels.resize(img.size());
  std::transform(img.begin(), img.end(), out.pixels.begin(), to_byte);
  out.annotations = std::move(anns);
  return true;
}

}  // namespace

Scene gen_scene(const SceneConfig& cfg, int id) {
  cfg.validate();
  Scene scene;
  scene.id = id;
  const Rng base = Rng(cfg.seed).fork(static_cast<std::uint64_t>(id));
  for (int attempt = 0; attempt < kSceneAttempts; ++attempt) {
    Rng rng = base.fork(static_cast<std::uint64_t>(attempt));
    if (try_scene(cfg, rng, scene)) return scene;
  }
  throw std::runtime_error("could not place objects for scene " + std::to_string(id));
}

Dataset gen_dataset(const SceneConfig& cfg, int n) {
  if (n < 0) throw ConfigError("scene count must be non-negative");
  Dataset ds;
  ds.config = cfg;
  ds.scenes.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ds.scenes.push_back(gen_scene(cfg, i));
  return ds;
}

std::pair<std::vector<Scene>, std::vector<Scene>> split_train_val(const std::vector<Scene>& scenes) {
  std::pair<std::vector<Scene>, std::vector<Scene>> out;
  for (const Scene& s : scenes) (s.id % 5 == 4 ? out.second : out.first).push_back(s);
  return out;
}

Tensor image_tensor(const Scene& scene) {
  const int s = scene.image_size;
  Array v(static_cast<Eigen::Index>(scene.pixels.size()));
  for (std::size_t i = 0; i < scene.pixels.size(); ++i) v(Eigen::Index(i)) = scene.pixels[i] / 255.0;
  return Tensor({1, s, s}, std::move(v));
}

std::string to_hex(const std::vector<std::uint8_t>& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out(bytes.size() * 2, '0');
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    out[2 * i] = digits[bytes[i] >> 4];
    out[2 * i + 1] = digits[bytes[i] & 15];
  }
  return out;
}

std::vector<std::uint8_t> from_hex(const std::string& hex) {
  if (hex.size() % 2 != 0) throw std::runtime_error("odd-length hex string");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::runtime_error(std::string("bad hex digit '") + c + "'");
  };
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) * 16 + nibble(hex[2 * i + 1]));
  }
  return out;
}

namespace {

nlohmann::json scene_config_json(const SceneConfig& c) {
  return {{"image_size", c.image_size},   {"classes", c.classes},         {"min_objects", c.min_objects},
          {"max_objects", c.max_objects}, {"min_side", c.min_side},       {"max_side", c.max_side},
          {"clutter_level", c.clutter_level}, {"max_overlap_iou", c.max_overlap_iou}, {"seed", c.seed}};
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
  SceneConfig c;
  c.image_size = j.at("image_size");
  c.classes = j.at("classes");
  c.min_objects = j.at("min_objects");
  c.max_objects = j.at("max_objects");
  c.min_side = j.at("min_side");
  c.max_side = j.at("max_side");
  c.clutter_level = j.at("clutter_level");
  c.max_overlap_iou = j.at("max_overlap_iou");
  c.seed = j.at("seed");
  return c;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out = open_output(path);
  nlohmann::json header = {{"format", "sodetr-dataset"}, {"version", 1}, {"count", ds.scenes.size()},
                           {"scene", scene_config_json(ds.config)}};
  out << header.dump() << '\n';
  for (const Scene& s : ds.scenes) {
    nlohmann::json anns = nlohmann::json::array();
    for (const Annotation& a : s.annotations) {
      anns.push_back({{"box", {a.box.cx, a.box.cy, a.box.w, a.box.h}}, {"label", a.label}});
    }
    nlohmann::json rec = {{"id", s.id}, {"pixels", to_hex(s.pixels)}, {"annotations", anns}};
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": missing dataset header");
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != "sodetr-dataset") throw IoError(path + ": not a dataset file");
  Dataset ds;
  ds.config = scene_config_from_json(header.at("scene"));
  const int s = ds.config.image_size;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    Scene scene;
    scene.id = rec.at("id");
    scene.image_size = s;
    scene.pixels = from_hex(rec.at("pixels").get<std::string>());
    if (scene.pixels.size() != static_cast<std::size_t>(s) * s) {
      throw IoError(path + ": scene " + std::to_string(scene.id) + " has the wrong pixel count");
    }
    for (const auto& a : rec.at("annotations")) {
      const auto b = a.at("box");
      scene.annotations.push_back({{b.at(0), b.at(1), b.at(2), b.at(3)}, a.at("label")});
    }
    ds.scenes.push_back(std::move(scene));
  }
  if (ds.scenes.size() != header.at("count").get<std::size_t>()) throw IoError(path + ": record count mismatch");
  return ds;
}

}  // namespace sodetr
