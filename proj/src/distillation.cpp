#include "sodetr/distillation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sodetr {

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "constant") return ScheduleKind::kConstant;
  if (s == "cosine") return ScheduleKind::kCosine;
  if (s == "linear") return ScheduleKind::kLinear;
  throw ConfigError("unknown schedule '" + s + "' (expected constant, cosine or linear)");
}

std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kCosine: return "cosine";
    case ScheduleKind::kLinear: return "linear";
  }
  return "?";
}

double schedule_weight(const Schedule& s, long t) {
  if (s.total_steps <= 0) throw ConfigError("schedule needs a positive step count");
  if (!(s.w0 >= 0)) throw ConfigError("schedule weight must be non-negative");
  if (t < 0) throw ConfigError("schedule step must be non-negative");
  const long tc = std::min(t, s.total_steps);
  const double r = static_cast<double>(tc) / static_cast<double>(s.total_steps);
  switch (s.kind) {
    case ScheduleKind::kConstant: return s.w0;
    case ScheduleKind::kLinear: return tc == s.total_steps ? 0.0 : s.w0 * (1.0 - r);
    case ScheduleKind::kCosine: return tc == s.total_steps ? 0.0 : s.w0 * (1.0 + std::cos(std::numbers::pi * r)) / 2.0;
  }
  return s.w0;
}

KDIoU parse_kd_iou(const std::string& s) {
  if (s == "expanded-siou") return KDIoU::kExpandedSIoU;
  if (s == "giou") return KDIoU::kGIoU;
  throw ConfigError("unknown kd-iou '" + s + "' (expected giou or expanded-siou)");
}

std::string to_string(KDIoU k) { return k == KDIoU::kGIoU ? "giou" : "expanded-siou"; }

void KDWeights::validate() const {
  if (!(alpha >= 0 && beta >= 0 && gamma >= 0) || !std::isfinite(alpha + beta + gamma)) {
    throw ConfigError("KD weights must be finite and non-negative");
  }
}

KDPairing kd_pairing(const DetectionSet& student, const DetectionSet& teacher, double conf_threshold,
                     const ExpandParams& expand) {
  std::vector<int> kept;
  for (std::size_t t = 0; t < teacher.size(); ++t) {
    if (teacher[t].score >= conf_threshold) kept.push_back(static_cast<int>(t));
  }
  KDPairing out;
  if (kept.empty() || student.empty()) return out;
  RowMatrix cost(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(student.size()));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const BoxD& tb = teacher[kept[r]].box;
    for (std::size_t s = 0; s < student.size(); ++s) {
      const BoxD& sb = student[s].box;
      const double l1 = std::abs(sb.cx - tb.cx) + std::abs(sb.cy - tb.cy) + std::abs(sb.w - tb.w) + std::abs(sb.h - tb.h);
      cost(Eigen::Index(r), Eigen::Index(s)) = -expanded_iou(sb, tb, expand) + l1;
    }
  }
  const Assignment a = hungarian(cost);
  for (const auto& [r, s] : a.pairs) out.pairs.emplace_back(s, kept[r]);
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

KDBatch make_kd_batch(const HeadOutput& student, const DetectionSet& teacher, const KDPairing& pairing) {
  const int k = student.logits.dim(0), classes = student.logits.dim(1);
  KDBatch b;
  b.s_c = sigmoid(student.logits);
  Array t_c = Array::Zero(Eigen::Index(k) * classes);
  if (pairing.empty()) {
    b.t_c = Tensor({k, classes}, std::move(t_c));
    return b;
  }
  std::vector<int> rows;
  std::vector<BoxD> t_boxes;
  Array t_o(static_cast<Eigen::Index>(pairing.pairs.size()));
  for (std::size_t p = 0; p < pairing.pairs.size(); ++p) {
    const auto [s, t] = pairing.pairs[p];
    const Detection& td = teacher.at(static_cast<std::size_t>(t));
    if (static_cast<int>(td.scores.size()) != classes) throw ShapeError("teacher and student class counts differ");
    for (int c = 0; c < classes; ++c) t_c(Eigen::Index(s) * classes + c) = td.scores[c];
    rows.push_back(s);
    t_boxes.push_back(td.box);
    t_o(Eigen::Index(p)) = td.score;
  }
  b.t_c = Tensor({k, classes}, std::move(t_c));
  b.s_b = gather_rows(student.boxes, rows);
  b.t_b = boxes_to_rows(t_boxes);
  b.t_o = Tensor({static_cast<int>(rows.size())}, std::move(t_o));
  return b;
}

Tensor kd_class_loss(const Tensor& s_c, const Tensor& t_c) { return mean(bce_probs(s_c, t_c)); }

Tensor kd_box_loss(const Tensor& s_b, const Tensor& t_b, const Tensor& t_o) {
  const int p = s_b.dim(0);
  Array weight(Eigen::Index(p) * 4);
  for (int i = 0; i < p; ++i) weight.segment(Eigen::Index(i) * 4, 4).setConstant(t_o.value()(i));
  return sum(abs(s_b - t_b) * Tensor(s_b.shape(), std::move(weight))) / (4.0 * p);
}

Tensor kd_iou_loss(const Tensor& s_b, const Tensor& t_b, const KDConfig& cfg) {
  const BoxT s = boxes_from_rows(s_b), t = boxes_from_rows(t_b);
  const Tensor agreement = cfg.iou == KDIoU::kGIoU ? giou(s, t) : expanded_siou(s, t, cfg.expand, cfg.siou);
  return mean(1.0 - agreement);
}

KDLoss kd_total(const KDBatch& batch, const KDConfig& cfg) {
  cfg.weights.validate();
  KDLoss out;
  if (batch.pairs() == 0) {
    out.total = Tensor::scalar(0.0);
    return out;
  }
  const Tensor lc = kd_class_loss(batch.s_c, batch.t_c);
  const Tensor lb = kd_box_loss(batch.s_b, batch.t_b, batch.t_o);
  const Tensor li = kd_iou_loss(batch.s_b, batch.t_b, cfg);
  const KDWeights& w = cfg.weights;
  out.total = lc * w.alpha + lb * w.beta + li * w.gamma;
  out.cls = lc.item();
  out.box = lb.item();
  out.iou = li.item();
  return out;
}

}  // namespace sodetr
