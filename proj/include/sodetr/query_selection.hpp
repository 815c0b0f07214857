#pragma once

#include "sodetr/detection.hpp"

#include <array>
#include <optional>
#include <stdexcept>
#include <vector>

namespace sodetr {

class SelectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SelectionConfig {
  int k = 60;
  double eps = 0.01;
  ExpandParams expand;
  double base_size = 0.05;
};

/// Fixed-grid anchors stored in logit space, one per cell of each level.
struct AnchorSet {
  RowMatrix logits;         // [N,4] logit(cx, cy, w, h)
  Mask valid;               // [N]
  std::vector<int> level;   // [N]
  std::vector<int> level_offsets;

  int size() const { return static_cast<int>(logits.rows()); }
};

inline double logit(double x) { return std::log(x / (1.0 - x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Logits are clamped to this range before the sigmoid so refined boxes stay
/// strictly inside (0, 1).
inline constexpr double kLogitLimit = 30.0;

AnchorSet generate_anchors(const std::vector<std::array<int, 2>>& level_shapes, const SelectionConfig& cfg);

BoxD refine_in_logit_space(const std::array<double, 4>& anchor_logits, const std::array<double, 4>& delta);
/// Batched form: rows of [K,4] anchor logits plus [K,4] deltas -> [K,4] boxes.
Tensor refine_in_logit_space(const Tensor& anchor_logits, const Tensor& delta);

/// Expanded-IoU of a matched prediction, 0 when unmatched.
double eiou_classification_target(const BoxD& pred, const std::optional<BoxD>& matched_gt,
                                  const SelectionConfig& cfg);

/// Indices of the k highest scores among valid entries, descending by score,
/// ties broken by smaller index.
std::vector<int> select_topk(const std::vector<double>& scores, const Mask& valid, int k);

/// Per-row maximum of a [N,C] score matrix.
std::vector<double> max_class_scores(const RowMatrix& scores);

}  // namespace sodetr
