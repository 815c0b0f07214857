#pragma once

#include "sodetr/detection.hpp"

#include <utility>
#include <vector>

namespace sodetr {

struct LossWeights {
  double cls = 2.0;
  double l1 = 5.0;
  double iou = 2.0;

  void validate() const;
};

struct MatchConfig {
  LossWeights weights;
  ExpandParams expand;
  SIoUParams siou;
};

/// Minimum-cost assignment. Every index on the smaller side is matched;
/// among optimal assignments the one whose target list (ordered by index on
/// the smaller side) is lexicographically smallest is returned.
struct Assignment {
  std::vector<int> row_to_col;  // -1 when unmatched
  std::vector<int> col_to_row;  // -1 when unmatched
  std::vector<std::pair<int, int>> pairs;  // (row, col), ascending by row
  double cost = 0.0;
};

Assignment hungarian(const RowMatrix& cost);

/// entry(i,j) = w_cls * -score_i[label_j] + w_l1 * L1(box_i, box_j)
///            + w_iou * (1 - expanded_siou(box_i, box_j)).
/// L1 is the sum of absolute coordinate differences.
RowMatrix matching_cost(const DetectionSet& preds, const std::vector<Annotation>& gts, const MatchConfig& cfg);

/// Raw output of one prediction head.
struct HeadOutput {
  Tensor logits;  // [K, classes]
  Tensor boxes;   // [K, 4], (cx, cy, w, h) in (0, 1)
};

DetectionSet to_detections(const HeadOutput& head);

struct HeadLoss {
  double cls = 0, l1 = 0, iou = 0, total = 0;
};

struct DetectionLoss {
  Tensor total;
  double cls = 0, l1 = 0, iou = 0;  // unweighted, summed over heads
  std::vector<HeadLoss> heads;
};

/// Per head: BCE against Expanded-IoU soft targets on the matched class,
/// L1 and (1 - Expanded-SIoU) on matched boxes. Each term is summed and
/// divided by max(1, number of ground-truth boxes). All heads share one
/// assignment, rows indexing queries and columns indexing `gts`.
DetectionLoss detection_loss(const std::vector<HeadOutput>& heads, const std::vector<Annotation>& gts,
                             const Assignment& assignment, const MatchConfig& cfg);

}  // namespace sodetr
