#include "sodetr/evaluation.hpp"

#include <algorithm>
#include <numeric>

namespace sodetr {

std::vector<double> EvalConfig::default_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) throw ConfigError("need at least one IoU threshold");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    if (!(iou_thresholds[i] > 0 && iou_thresholds[i] <= 1)) throw ConfigError("IoU thresholds must lie in (0, 1]");
    if (i > 0 && !(iou_thresholds[i] > iou_thresholds[i - 1])) throw ConfigError("IoU thresholds must increase");
  }
  if (recall_points < 2) throw ConfigError("recall_points must be at least 2");
  if (max_dets <= 0) throw ConfigError("max_dets must be positive");
}

namespace {

struct AreaRange {
  double lo, hi;
  bool contains(double a) const { return a >= lo && a < hi; }
};

// Per-image, per-class COCO matching with ignore flags.
struct ImageClassEval {
  std::vector<double> scores;
  std::vector<bool> tp;
  std::vector<bool> ignored;
  int num_gt = 0;
};

ImageClassEval eval_image_class(const EvalImage& img, int cls, double iou_t, const AreaRange& range,
                                const EvalConfig& cfg) {
  const double px = double(cfg.image_size) * cfg.image_size;
  std::vector<const Annotation*> gts;
  for (const Annotation& g : img.ground_truth)
    if (g.label == cls) gts.push_back(&g);
  std::vector<bool> gt_ignore(gts.size());
  for (std::size_t g = 0; g < gts.size(); ++g) gt_ignore[g] = !range.contains(gts[g]->box.area() * px);
  // Non-ignored gts first.
  std::vector<std::size_t> gorder(gts.size());
  std::iota(gorder.begin(), gorder.end(), 0);
  std::stable_sort(gorder.begin(), gorder.end(), [&](std::size_t a, std::size_t b) { return !gt_ignore[a] && gt_ignore[b]; });

  std::vector<const Detection*> dets;
  for (const Detection& d : img.detections)
    if (d.label == cls) dets.push_back(&d);
  std::stable_sort(dets.begin(), dets.end(), [](const Detection* a, const Detection* b) { return a->score > b->score; });
  if (static_cast<int>(dets.size()) > cfg.max_dets) dets.resize(cfg.max_dets);

  ImageClassEval out;
  for (bool ig : gt_ignore) out.num_gt += ig ? 0 : 1;
  std::vector<bool> gt_used(gts.size(), false);
  for (const Detection* d : dets) {
    double best_iou = std::min(iou_t, 1.0 - 1e-10);
    int best = -1;
    for (std::size_t g : gorder) {
      if (gt_used[g]) continue;
      if (best >= 0 && !gt_ignore[best] && gt_ignore[g]) break;
      const double v = iou(d->box, gts[g]->box);
      if (v < best_iou) continue;
      best_iou = v;
      best = static_cast<int>(g);
    }
    out.scores.push_back(d->score);
    if (best >= 0) {
      gt_used[best] = true;
      out.tp.push_back(true);
      out.ignored.push_back(gt_ignore[best]);
    } else {
      out.tp.push_back(false);
      out.ignored.push_back(!range.contains(d->box.area() * px));
    }
  }
  return out;
}

// AP for one class at one threshold and range; empty when there is no gt.
std::optional<double> class_ap(const std::vector<EvalImage>& images, int cls, double iou_t, const AreaRange& range,
                               const EvalConfig& cfg) {
  std::vector<double> scores;
  std::vector<bool> tp;
  int n_gt = 0;
  for (const EvalImage& img : images) {
    const ImageClassEval e = eval_image_class(img, cls, iou_t, range, cfg);
    n_gt += e.num_gt;
    for (std::size_t i = 0; i < e.scores.size(); ++i) {
      if (e.ignored[i]) continue;
      scores.push_back(e.scores[i]);
      tp.push_back(e.tp[i]);
    }
  }
  if (n_gt == 0) return std::nullopt;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<bool> ranked(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) ranked[i] = tp[order[i]];
  const PRCurve pr = pr_curve(ranked, n_gt, cfg.recall_points);
  return std::accumulate(pr.interpolated.begin(), pr.interpolated.end(), 0.0) / cfg.recall_points;
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& v) {
  double s = 0;
  int n = 0;
  for (const auto& x : v) {
    if (x) {
      s += *x;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / n;
}

}  // namespace

MatchFlags match_detections(const DetectionSet& dets, const std::vector<Annotation>& gts, double iou_t) {
  MatchFlags out;
  out.num_gt = static_cast<int>(gts.size());
  std::vector<bool> used(gts.size(), false);
  for (const Detection& d : dets) {
    double best_iou = iou_t;
    int best = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].label != d.label) continue;
      const double v = iou(d.box, gts[g].box);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) used[best] = true;
    out.matched_gt.push_back(best);
    out.tp.push_back(best >= 0);
  }
  return out;
}

PRCurve pr_curve(const std::vector<bool>& ranked_tp, int n_gt, int recall_points) {
  PRCurve pr;
  int tp = 0, fp = 0;
  for (bool t : ranked_tp) {
    (t ? tp : fp) += 1;
    pr.recall.push_back(n_gt > 0 ? double(tp) / n_gt : 0.0);
    pr.precision.push_back(double(tp) / (tp + fp));
  }
  std::vector<double> envelope = pr.precision;
  for (std::size_t i = envelope.size(); i-- > 1;) envelope[i - 1] = std::max(envelope[i - 1], envelope[i]);
  pr.interpolated.assign(static_cast<std::size_t>(recall_points), 0.0);
  for (int r = 0; r < recall_points; ++r) {
    const double level = double(r) / (recall_points - 1);
    const auto it = std::lower_bound(pr.recall.begin(), pr.recall.end(), level);
    if (it != pr.recall.end()) pr.interpolated[r] = envelope[static_cast<std::size_t>(it - pr.recall.begin())];
  }
  return pr;
}

Metrics average_precision(const std::vector<EvalImage>& images, int classes, const EvalConfig& cfg) {
  cfg.validate();
  if (classes <= 0) throw ConfigError("classes must be positive");
  const AreaRange all{0.0, 1e18}, small{0.0, cfg.small_area}, medium{cfg.small_area, cfg.medium_area},
      large{cfg.medium_area, 1e18};
  auto over_thresholds = [&](const AreaRange& range, const std::vector<double>& ts) {
    std::vector<std::optional<double>> v;
    for (int c = 0; c < classes; ++c)
      for (double t : ts) v.push_back(class_ap(images, c, t, range, cfg));
    return v;
  };
  Metrics m;
  const auto full = over_thresholds(all, cfg.iou_thresholds);
  m.ap = mean_defined(full);
  m.ap50 = mean_defined(over_thresholds(all, {0.5}));
  m.ap75 = mean_defined(over_thresholds(all, {0.75}));
  m.ap_small = mean_defined(over_thresholds(small, cfg.iou_thresholds));
  m.ap_medium = mean_defined(over_thresholds(medium, cfg.iou_thresholds));
  m.ap_large = mean_defined(over_thresholds(large, cfg.iou_thresholds));
  const std::size_t nt = cfg.iou_thresholds.size();
  for (int c = 0; c < classes; ++c) {
    std::vector<std::optional<double>> per(full.begin() + c * nt, full.begin() + (c + 1) * nt);
    m.per_class_ap.push_back(mean_defined(per));
  }
  return m;
}

}  // namespace sodetr
