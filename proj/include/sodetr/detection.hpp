#pragma once

#include "sodetr/box.hpp"

#include <vector>

namespace sodetr {

struct Annotation {
  BoxD box;
  int label = 0;
};

/// One prediction: box, per-class probabilities, and the argmax label/score.
struct Detection {
  BoxD box;
  std::vector<double> scores;
  int label = 0;
  double score = 0.0;
};

using DetectionSet = std::vector<Detection>;

/// Builds detections from [K,C] probabilities and [K,4] boxes, one per query.
inline DetectionSet make_detections(const RowMatrix& probs, const RowMatrix& boxes) {
  DetectionSet out;
  out.reserve(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Detection d;
    d.box = {boxes(i, 0), boxes(i, 1), boxes(i, 2), boxes(i, 3)};
    d.scores.assign(probs.row(i).data(), probs.row(i).data() + probs.cols());
    Eigen::Index best = 0;
    d.score = probs.row(i).maxCoeff(&best);
    d.label = static_cast<int>(best);
    out.push_back(std::move(d));
  }
  return out;
}

inline RowMatrix score_matrix(const DetectionSet& dets, int classes) {
  RowMatrix m(static_cast<Eigen::Index>(dets.size()), classes);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (int c = 0; c < classes; ++c) m(Eigen::Index(i), c) = dets[i].scores.at(c);
  }
  return m;
}

}  // namespace sodetr
