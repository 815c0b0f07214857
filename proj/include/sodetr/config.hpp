#pragma once

#include "sodetr/train.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace sodetr {

struct KDSettings {
  std::string teacher_checkpoint;
  std::string replay;
  int teacher_channels = 64;
  int teacher_decoder_layers = 3;
  KDConfig kd;
  ScheduleKind schedule = ScheduleKind::kLinear;
  double w0 = 1.0;
};

/// Every knob of a run, grouped into the sections scene, model, train, kd
/// and eval. Text form: "[section]" headers and "key = value" lines; '#'
/// starts a comment.
class RunConfig {
 public:
  RunConfig();
  RunConfig(const RunConfig& other);
  RunConfig& operator=(const RunConfig& other);

  SceneConfig scene;
  int scene_count = 250;
  ModelConfig model;
  TrainConfig train;
  KDSettings kd;
  EvalConfig eval;

  /// Throws ConfigError naming the key when it is unknown or the value is malformed.
  void set(const std::string& section, const std::string& key, const std::string& value);
  std::string get(const std::string& section, const std::string& key) const;

  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& origin = "<text>");
  /// Resolved configuration in the file format, every key listed.
  std::string dump() const;
  void save(const std::string& path) const;

  /// Pushes the single seed into every section that draws randomness.
  void set_seed(std::uint64_t seed);
  ModelConfig teacher_model() const;

 private:
  struct Entry {
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
  };
  void bind();
  std::vector<std::pair<std::string, std::vector<std::string>>> order_;
  std::map<std::string, Entry> entries_;
};

}  // namespace sodetr
