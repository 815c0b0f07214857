#pragma once

#include "sodetr/matching.hpp"

#include <string>
#include <utility>
#include <vector>

namespace sodetr {

enum class ScheduleKind { kConstant, kCosine, kLinear };
ScheduleKind parse_schedule_kind(const std::string& s);
std::string to_string(ScheduleKind k);

struct Schedule {
  ScheduleKind kind = ScheduleKind::kLinear;
  double w0 = 1.0;
  long total_steps = 1;
};

/// constant: w0; linear: w0 (1 - t/T); cosine: w0 (1 + cos(pi t/T)) / 2.
/// Steps past T are clamped to T.
double schedule_weight(const Schedule& s, long t);

enum class KDIoU { kExpandedSIoU, kGIoU };
KDIoU parse_kd_iou(const std::string& s);
std::string to_string(KDIoU k);

struct KDWeights {
  double alpha = 1.0;
  double beta = 5.0;
  double gamma = 2.0;

  void validate() const;
};

struct KDConfig {
  KDWeights weights;
  ExpandParams expand;
  SIoUParams siou;
  KDIoU iou = KDIoU::kExpandedSIoU;
  double conf_threshold = 0.3;
};

/// Student/teacher query pairs, (student index, teacher index).
struct KDPairing {
  std::vector<std::pair<int, int>> pairs;
  bool empty() const { return pairs.empty(); }
};

/// Keeps teacher queries whose top class score reaches the threshold and
/// assigns them to student queries with cost -EIoU + L1.
KDPairing kd_pairing(const DetectionSet& student, const DetectionSet& teacher, double conf_threshold,
                     const ExpandParams& expand);

struct KDBatch {
  Tensor s_c;  // [K, classes] student probabilities, every query
  Tensor t_c;  // [K, classes] teacher scores on paired rows, 0 on the rest
  Tensor s_b;  // [P, 4] paired student boxes
  Tensor t_b;  // [P, 4] paired teacher boxes
  Tensor t_o;  // [P] teacher object confidence (top class score)

  int pairs() const { return s_b.defined() ? s_b.dim(0) : 0; }
};

KDBatch make_kd_batch(const HeadOutput& student, const DetectionSet& teacher, const KDPairing& pairing);

/// Mean elementwise BCE of student probabilities against teacher scores.
Tensor kd_class_loss(const Tensor& s_c, const Tensor& t_c);
/// Mean over pairs of t_o * |s_b - t_b|_1 / 4.
Tensor kd_box_loss(const Tensor& s_b, const Tensor& t_b, const Tensor& t_o);
/// Mean over pairs of 1 - Expanded-SIoU (or 1 - GIoU).
Tensor kd_iou_loss(const Tensor& s_b, const Tensor& t_b, const KDConfig& cfg);

struct KDLoss {
  Tensor total;
  double cls = 0, box = 0, iou = 0;
};

/// alpha L_c + beta L_L1 + gamma L_IoU; exactly 0 for a batch without pairs.
KDLoss kd_total(const KDBatch& batch, const KDConfig& cfg);

}  // namespace sodetr
