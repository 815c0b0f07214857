#pragma once

#include "sodetr/detection.hpp"

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace sodetr {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ofstream open_output(const std::string& path);
std::ifstream open_input(const std::string& path);

/// Detections per image, keyed by image id.
using DetectionFile = std::map<int, DetectionSet>;

/// JSON lines {image_id, detections: [{box, label, score}]}.
void write_detections(const DetectionFile& dets, const std::string& path);
DetectionFile read_detections(const std::string& path);

/// Teacher replay: JSON lines {image_id, queries: [{box, scores, obj}]}.
void write_replay(const DetectionFile& teacher, const std::string& path);
DetectionFile read_replay(const std::string& path);

/// Binary graymap (P5); values are min-max scaled to 0..255, a flat map
/// is written as all zeros.
void write_pgm(const std::string& path, const RowMatrix& map);

}  // namespace sodetr
