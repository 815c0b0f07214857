#include "sodetr/query_selection.hpp"

#include <algorithm>
#include <numeric>

namespace sodetr {

AnchorSet generate_anchors(const std::vector<std::array<int, 2>>& level_shapes, const SelectionConfig& cfg) {
  if (level_shapes.empty()) throw ConfigError("anchor generation needs at least one level");
  if (!(cfg.eps >= 0 && cfg.eps < 0.5)) throw ConfigError("anchor validity margin must lie in [0, 0.5)");
  int total = 0;
  for (const auto& [h, w] : level_shapes) {
    if (h <= 0 || w <= 0) throw ConfigError("anchor level shapes must be positive");
    total += h * w;
  }
  AnchorSet a;
  a.logits.resize(total, 4);
  a.valid.resize(total);
  a.level.reserve(total);
  int row = 0;
  for (std::size_t l = 0; l < level_shapes.size(); ++l) {
    const auto [h, w] = level_shapes[l];
    const double size = cfg.base_size * std::pow(2.0, static_cast<double>(l));
    a.level_offsets.push_back(row);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j, ++row) {
        const std::array<double, 4> box{(j + 0.5) / w, (i + 0.5) / h, size, size};
        bool ok = true;
        for (int t = 0; t < 4; ++t) {
          ok = ok && box[t] >= cfg.eps && box[t] <= 1.0 - cfg.eps;
          a.logits(row, t) = logit(box[t]);
        }
        a.valid(row) = ok;
        a.level.push_back(static_cast<int>(l));
      }
    }
  }
  return a;
}

BoxD refine_in_logit_space(const std::array<double, 4>& anchor_logits, const std::array<double, 4>& delta) {
  std::array<double, 4> v{};
  for (int t = 0; t < 4; ++t) v[t] = sigmoid(std::clamp(anchor_logits[t] + delta[t], -kLogitLimit, kLogitLimit));
  return {v[0], v[1], v[2], v[3]};
}

Tensor refine_in_logit_space(const Tensor& anchor_logits, const Tensor& delta) {
  return sigmoid(clamp(anchor_logits + delta, -kLogitLimit, kLogitLimit));
}

double eiou_classification_target(const BoxD& pred, const std::optional<BoxD>& matched_gt,
                                  const SelectionConfig& cfg) {
  if (!matched_gt) return 0.0;
  return expanded_iou(pred, *matched_gt, cfg.expand);
}

std::vector<int> select_topk(const std::vector<double>& scores, const Mask& valid, int k) {
  if (valid.size() != static_cast<Eigen::Index>(scores.size())) {
    throw ShapeError("score and validity lengths differ");
  }
  if (k <= 0) throw ConfigError("k must be positive");
  std::vector<int> idx;
  idx.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (valid(Eigen::Index(i))) idx.push_back(static_cast<int>(i));
  }
  if (static_cast<int>(idx.size()) < k) {
    throw SelectionError("only " + std::to_string(idx.size()) + " valid anchors for k = " + std::to_string(k));
  }
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  idx.resize(k);
  return idx;
}

std::vector<double> max_class_scores(const RowMatrix& scores) {
  std::vector<double> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) out[i] = scores.row(i).maxCoeff();
  return out;
}

}  // namespace sodetr
