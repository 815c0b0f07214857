#include "sodetr/config.hpp"

#include <fstream>
#include <sstream>

namespace sodetr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v, const std::string& key) {
  std::istringstream is(v);
  T out{};
  is >> out;
  if (is.fail() || !is.eof()) throw ConfigError("bad value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean '" + v + "' for " + key);
}

// Shortest decimal form that reads back to the same double.
std::string fmt(double v) {
  for (int digits = 15;; ++digits) {
    std::ostringstream os;
    os.precision(digits);
    os << v;
    if (std::stod(os.str()) == v || digits == 17) return os.str();
  }
}

}  // namespace

RunConfig::RunConfig() { bind(); }
RunConfig::RunConfig(const RunConfig& other)
    : scene(other.scene), scene_count(other.scene_count), model(other.model), train(other.train), kd(other.kd),
      eval(other.eval) {
  bind();
}
RunConfig& RunConfig::operator=(const RunConfig& other) {
  scene = other.scene;
  scene_count = other.scene_count;
  model = other.model;
  train = other.train;
  kd = other.kd;
  eval = other.eval;
  return *this;
}

void RunConfig::bind() {
  order_.clear();
  entries_.clear();
  auto add = [&](const std::string& section, const std::string& key, Entry e) {
    if (order_.empty() || order_.back().first != section) order_.push_back({section, {}});
    order_.back().second.push_back(key);
    entries_[section + "." + key] = std::move(e);
  };
  auto integer = [&](const std::string& s, const std::string& k, int& ref) {
    add(s, k, {[&ref] { return std::to_string(ref); }, [&ref, k](const std::string& v) { ref = parse_number<int>(v, k); }});
  };
  auto seed = [&](const std::string& s, const std::string& k, std::uint64_t& ref) {
    add(s, k, {[&ref] { return std::to_string(ref); },
               [&ref, k](const std::string& v) { ref = parse_number<std::uint64_t>(v, k); }});
  };
  auto real = [&](const std::string& s, const std::string& k, double& ref) {
    add(s, k, {[&ref] { return fmt(ref); }, [&ref, k](const std::string& v) { ref = parse_number<double>(v, k); }});
  };
  auto boolean = [&](const std::string& s, const std::string& k, bool& ref) {
    add(s, k, {[&ref] { return std::string(ref ? "true" : "false"); },
               [&ref, k](const std::string& v) { ref = parse_bool(v, k); }});
  };
  auto text = [&](const std::string& s, const std::string& k, std::string& ref) {
    add(s, k, {[&ref] { return ref; }, [&ref](const std::string& v) { ref = v; }});
  };

  integer("scene", "image_size", scene.image_size);
  integer("scene", "classes", scene.classes);
  integer("scene", "min_objects", scene.min_objects);
  integer("scene", "max_objects", scene.max_objects);
  integer("scene", "min_side", scene.min_side);
  integer("scene", "max_side", scene.max_side);
  real("scene", "clutter_level", scene.clutter_level);
  real("scene", "max_overlap_iou", scene.max_overlap_iou);
  integer("scene", "count", scene_count);
  seed("scene", "seed", scene.seed);

  integer("model", "channels", model.channels);
  integer("model", "decoder_layers", model.decoder_layers);
  integer("model", "heads", model.heads);
  integer("model", "queries", model.queries);
  real("model", "alpha2", model.alpha2);
  real("model", "theta", model.theta);
  add("model", "freq_mode",
      {[this] { return to_string(model.freq_mode); }, [this](const std::string& v) { model.freq_mode = parse_freq_mode(v); }});
  boolean("model", "use_ddf", model.use_ddf);
  boolean("model", "eiou_select", model.eiou_select);

  integer("train", "epochs", train.epochs);
  integer("train", "batch_size", train.batch_size);
  add("train", "optimizer",
      {[this] { return std::string(train.optimizer.kind == OptimizerConfig::Kind::kSgd ? "sgd" : "adamw"); },
       [this](const std::string& v) {
         if (v == "sgd") train.optimizer.kind = OptimizerConfig::Kind::kSgd;
         else if (v == "adamw") train.optimizer.kind = OptimizerConfig::Kind::kAdamW;
         else throw ConfigError("bad value '" + v + "' for optimizer (expected sgd or adamw)");
       }});
  real("train", "learning_rate", train.optimizer.learning_rate);
  real("train", "weight_decay", train.optimizer.weight_decay);
  real("train", "grad_clip", train.optimizer.grad_clip);
  real("train", "w_cls", train.loss_weights.cls);
  real("train", "w_l1", train.loss_weights.l1);
  real("train", "w_iou", train.loss_weights.iou);
  integer("train", "eval_every", train.eval_every);
  seed("train", "seed", train.seed);

  text("kd", "teacher_checkpoint", kd.teacher_checkpoint);
  text("kd", "replay", kd.replay);
  integer("kd", "teacher_channels", kd.teacher_channels);
  integer("kd", "teacher_decoder_layers", kd.teacher_decoder_layers);
  real("kd", "alpha", kd.kd.weights.alpha);
  real("kd", "beta", kd.kd.weights.beta);
  real("kd", "gamma", kd.kd.weights.gamma);
  add("kd", "schedule",
      {[this] { return to_string(kd.schedule); }, [this](const std::string& v) { kd.schedule = parse_schedule_kind(v); }});
  real("kd", "w0", kd.w0);
  add("kd", "iou", {[this] { return to_string(kd.kd.iou); }, [this](const std::string& v) { kd.kd.iou = parse_kd_iou(v); }});
  real("kd", "conf_threshold", kd.kd.conf_threshold);

  integer("eval", "max_dets", eval.max_dets);
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  const auto it = entries_.find(section + "." + key);
  if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "' in section [" + section + "]");
  it->second.set(value);
}

std::string RunConfig::get(const std::string& section, const std::string& key) const {
  const auto it = entries_.find(section + "." + key);
  if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "' in section [" + section + "]");
  return it->second.get();
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& [name, keys] : order_) known = known || name == section;
      if (!known) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of any section");
    try {
      set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in = open_input(path);
  std::ostringstream os;
  os << in.rdbuf();
  load_text(os.str(), path);
}

std::string RunConfig::dump() const {
  std::ostringstream os;
  for (std::size_t s = 0; s < order_.size(); ++s) {
    if (s) os << '\n';
    os << '[' << order_[s].first << "]\n";
    for (const std::string& k : order_[s].second) os << k << " = " << entries_.at(order_[s].first + "." + k).get() << '\n';
  }
  return os.str();
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out = open_output(path);
  out << dump();
  if (!out) throw IoError("failed writing " + path);
}

void RunConfig::set_seed(std::uint64_t seed) {
  scene.seed = seed;
  train.seed = seed;
}

ModelConfig RunConfig::teacher_model() const {
  ModelConfig t = model;
  t.channels = kd.teacher_channels;
  t.decoder_layers = kd.teacher_decoder_layers;
  return t;
}

}  // namespace sodetr
