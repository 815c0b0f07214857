#include "sodetr/io.hpp"

#include <json.hpp>

#include <cmath>

namespace sodetr {

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

namespace {

nlohmann::json box_json(const BoxD& b) { return {b.cx, b.cy, b.w, b.h}; }

BoxD box_from_json(const nlohmann::json& j) { return {j.at(0), j.at(1), j.at(2), j.at(3)}; }

template <typename F>
void for_each_record(const std::string& path, F&& f) {
  std::ifstream in = open_input(path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      f(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

void write_detections(const DetectionFile& dets, const std::string& path) {
  std::ofstream out = open_output(path);
  for (const auto& [id, set] : dets) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Detection& d : set) arr.push_back({{"box", box_json(d.box)}, {"label", d.label}, {"score", d.score}});
    out << nlohmann::json{{"image_id", id}, {"detections", arr}}.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

DetectionFile read_detections(const std::string& path) {
  DetectionFile out;
  for_each_record(path, [&](const nlohmann::json& rec) {
    DetectionSet& set = out[rec.at("image_id").get<int>()];
    for (const auto& d : rec.at("detections")) {
      Detection det;
      det.box = box_from_json(d.at("box"));
      det.label = d.at("label");
      det.score = d.at("score");
      set.push_back(std::move(det));
    }
  });
  return out;
}

void write_replay(const DetectionFile& teacher, const std::string& path) {
  std::ofstream out = open_output(path);
  for (const auto& [id, set] : teacher) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Detection& d : set) arr.push_back({{"box", box_json(d.box)}, {"scores", d.scores}, {"obj", d.score}});
    out << nlohmann::json{{"image_id", id}, {"queries", arr}}.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

DetectionFile read_replay(const std::string& path) {
  DetectionFile out;
  for_each_record(path, [&](const nlohmann::json& rec) {
    DetectionSet& set = out[rec.at("image_id").get<int>()];
    for (const auto& q : rec.at("queries")) {
      Detection det;
      det.box = box_from_json(q.at("box"));
      det.scores = q.at("scores").get<std::vector<double>>();
      det.score = q.at("obj");
      const auto best = std::max_element(det.scores.begin(), det.scores.end());
      det.label = best == det.scores.end() ? 0 : static_cast<int>(best - det.scores.begin());
      set.push_back(std::move(det));
    }
  });
  return out;
}

void write_pgm(const std::string& path, const RowMatrix& map) {
  std::ofstream out = open_output(path);
  out << "P5\n" << map.cols() << ' ' << map.rows() << "\n255\n";
  const double lo = map.minCoeff(), hi = map.maxCoeff();
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  for (Eigen::Index i = 0; i < map.rows(); ++i) {
    for (Eigen::Index j = 0; j < map.cols(); ++j) {
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround((map(i, j) - lo) * scale))));
    }
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace sodetr
