#pragma once

#include "sodetr/detection.hpp"

#include <optional>
#include <vector>

namespace sodetr {

struct EvalConfig {
  std::vector<double> iou_thresholds = default_thresholds();
  int recall_points = 101;
  double small_area = 32.0 * 32.0;   // pixels
  double medium_area = 96.0 * 96.0;  // pixels
  int max_dets = 100;
  int image_size = 96;

  static std::vector<double> default_thresholds();
  void validate() const;
};

/// One image's detections with its ground truth.
struct EvalImage {
  DetectionSet detections;
  std::vector<Annotation> ground_truth;
};

struct MatchFlags {
  std::vector<int> matched_gt;  // per detection, -1 for a false positive
  std::vector<bool> tp;
  int num_gt = 0;
};

/// Greedy matching of detections (sorted by descending score) to ground
/// truth of the same class; each detection takes the highest-IoU unmatched
/// gt with IoU >= iou_t.
MatchFlags match_detections(const DetectionSet& dets, const std::vector<Annotation>& gts, double iou_t);

struct PRCurve {
  std::vector<double> precision;     // per ranked detection
  std::vector<double> recall;        // per ranked detection
  std::vector<double> interpolated;  // at the recall points
};

/// Precision/recall of ranked TP flags against n_gt positives.
PRCurve pr_curve(const std::vector<bool>& ranked_tp, int n_gt, int recall_points);

struct Metrics {
  std::optional<double> ap, ap50, ap75, ap_small, ap_medium, ap_large;
  std::vector<std::optional<double>> per_class_ap;
};

/// AP over classes and thresholds per COCO semantics, including area
/// buckets in which out-of-range gts are ignored. Undefined values (no gt)
/// are empty optionals.
Metrics average_precision(const std::vector<EvalImage>& images, int classes, const EvalConfig& cfg = {});

}  // namespace sodetr
