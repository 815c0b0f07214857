#pragma once

#include "sodetr/detection.hpp"
#include "sodetr/rng.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace sodetr {

/// Synthetic small-object scenes: textured rectangles over a noisy
/// background. The texture encodes the class (0 solid, 1 striped,
/// 2 checker; further classes cycle the patterns with shifted intensity).
struct SceneConfig {
  int image_size = 96;
  int classes = 3;
  int min_objects = 3;
  int max_objects = 12;
  int min_side = 3;   // pixels
  int max_side = 12;  // pixels
  double clutter_level = 0.1;
  double max_overlap_iou = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Scene {
  int id = 0;
  int image_size = 0;
  std::vector<std::uint8_t> pixels;  // row-major grayscale
  std::vector<Annotation> annotations;
};

struct Dataset {
  SceneConfig config;
  std::vector<Scene> scenes;
};

/// Scene i is drawn from an independent stream forked from (seed, i).
Scene gen_scene(const SceneConfig& cfg, int id);
Dataset gen_dataset(const SceneConfig& cfg, int n);

/// Every fifth scene (id % 5 == 4) goes to validation.
std::pair<std::vector<Scene>, std::vector<Scene>> split_train_val(const std::vector<Scene>& scenes);

/// [1, S, S] tensor of intensities in [0, 1].
Tensor image_tensor(const Scene& scene);

/// JSON lines: a header record, then one {id, pixels, annotations} record per scene.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

std::string to_hex(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> from_hex(const std::string& hex);

}  // namespace sodetr
