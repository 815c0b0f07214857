#include "sodetr/matching.hpp"

#include <algorithm>
#include <functional>
#include <limits>

namespace sodetr {

void LossWeights::validate() const {
  if (!(cls >= 0 && l1 >= 0 && iou >= 0)) throw ConfigError("loss weights must be non-negative");
  if (!(cls > 0 || l1 > 0 || iou > 0)) throw ConfigError("at least one loss weight must be positive");
}

namespace {

struct Solution {
  std::vector<int> row_to_col;
  std::vector<double> u, v;
};

// Shortest augmenting path with potentials; rows <= cols. Keeps u_i + v_j <= c_ij
// everywhere, equality on matched pairs, and v_j == 0 on unmatched columns.
Solution solve(const RowMatrix& c) {
  const int n = static_cast<int>(c.rows()), m = static_cast<int>(c.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Solution s;
  s.row_to_col.assign(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) s.row_to_col[p[j] - 1] = j - 1;
  }
  s.u.assign(u.begin() + 1, u.end());
  s.v.assign(v.begin() + 1, v.end());
  return s;
}

// Moves to the lexicographically smallest optimal assignment. Optimal
// assignments are exactly those on tight edges that leave only columns with
// v == 0 unmatched; unmatched columns behave as if held by interchangeable
// zero-cost dummy rows, represented by the pseudo-row kDummy.
void lexicographic_refine(const RowMatrix& c, const Solution& s, std::vector<int>& row_to_col) {
  const int n = static_cast<int>(c.rows()), m = static_cast<int>(c.cols());
  const double tol = 1e-9 * (1.0 + c.cwiseAbs().maxCoeff());
  auto tight = [&](int i, int j) { return std::abs(c(i, j) - s.u[i] - s.v[j]) <= tol; };
  auto free_ok = [&](int j) { return std::abs(s.v[j]) <= tol; };
  constexpr int kDummy = -1;

  std::vector<int> col_to_row(m, kDummy);
  for (int i = 0; i < n; ++i) col_to_row[row_to_col[i]] = i;

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < row_to_col[i]; ++j) {
      if (!tight(i, j)) continue;
      const int owner = col_to_row[j];
      if (owner != kDummy && owner < i) continue;  // held by a settled row
      const int freed = row_to_col[i];
      std::vector<char> seen_col(m, 0), seen_row(n, 0);
      bool seen_dummy = false;
      seen_col[j] = 1;
      seen_col[freed] = 0;

      // Finds an alternating path from row x (or the dummy pool) to `freed`,
      // rewiring the matching on success.
      std::function<bool(int)> augment = [&](int x) -> bool {
        if (x == kDummy) {
          if (seen_dummy) return false;
          seen_dummy = true;
        } else {
          seen_row[x] = 1;
        }
        for (int cc = 0; cc < m; ++cc) {
          if (seen_col[cc]) continue;
          const bool edge = x == kDummy ? free_ok(cc) : tight(x, cc);
          if (!edge) continue;
          const int holder = col_to_row[cc];
          if (cc != freed && holder != kDummy && (holder <= i || seen_row[holder])) continue;
          seen_col[cc] = 1;
          bool ok = cc == freed;
          if (!ok) ok = augment(holder);
          if (ok) {
            if (x == kDummy) {
              col_to_row[cc] = kDummy;
            } else {
              row_to_col[x] = cc;
              col_to_row[cc] = x;
            }
            return true;
          }
        }
        return false;
      };

      if (augment(owner)) {
        row_to_col[i] = j;
        col_to_row[j] = i;
        break;
      }
    }
  }
}

}  // namespace

Assignment hungarian(const RowMatrix& cost) {
  if (!cost.allFinite()) throw ConfigError("cost matrix has non-finite entries");
  Assignment a;
  const int rows = static_cast<int>(cost.rows()), cols = static_cast<int>(cost.cols());
  a.row_to_col.assign(rows, -1);
  a.col_to_row.assign(cols, -1);
  if (rows == 0 || cols == 0) return a;

  const bool flip = rows > cols;
  const RowMatrix c = flip ? RowMatrix(cost.transpose()) : cost;
  const Solution s = solve(c);
  std::vector<int> match = s.row_to_col;
  lexicographic_refine(c, s, match);

  for (int i = 0; i < static_cast<int>(match.size()); ++i) {
    const int r = flip ? match[i] : i;
    const int col = flip ? i : match[i];
    a.row_to_col[r] = col;
    a.col_to_row[col] = r;
  }
  for (int r = 0; r < rows; ++r) {
    if (a.row_to_col[r] >= 0) {
      a.pairs.emplace_back(r, a.row_to_col[r]);
      a.cost += cost(r, a.row_to_col[r]);
    }
  }
  return a;
}

RowMatrix matching_cost(const DetectionSet& preds, const std::vector<Annotation>& gts, const MatchConfig& cfg) {
  cfg.weights.validate();
  RowMatrix c(static_cast<Eigen::Index>(preds.size()), static_cast<Eigen::Index>(gts.size()));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const BoxD& p = preds[i].box;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const BoxD& g = gts[j].box;
      const double score = preds[i].scores.at(static_cast<std::size_t>(gts[j].label));
      const double l1 = std::abs(p.cx - g.cx) + std::abs(p.cy - g.cy) + std::abs(p.w - g.w) + std::abs(p.h - g.h);
      c(Eigen::Index(i), Eigen::Index(j)) = cfg.weights.cls * -score + cfg.weights.l1 * l1 +
                                            cfg.weights.iou * (1.0 - expanded_siou(p, g, cfg.expand, cfg.siou));
    }
  }
  return c;
}

DetectionSet to_detections(const HeadOutput& head) {
  const int k = head.logits.dim(0), classes = head.logits.dim(1);
  RowMatrix probs = Eigen::Map<const RowMatrix>(head.logits.value().data(), k, classes);
  probs = probs.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  const RowMatrix boxes = Eigen::Map<const RowMatrix>(head.boxes.value().data(), k, 4);
  return make_detections(probs, boxes);
}

DetectionLoss detection_loss(const std::vector<HeadOutput>& heads, const std::vector<Annotation>& gts,
                             const Assignment& assignment, const MatchConfig& cfg) {
  cfg.weights.validate();
  if (heads.empty()) throw ConfigError("detection loss needs at least one head");
  const double norm = 1.0 / std::max<double>(1.0, static_cast<double>(gts.size()));

  std::vector<int> rows, cols;
  for (const auto& [r, c] : assignment.pairs) {
    if (c < 0 || c >= static_cast<int>(gts.size())) throw ConfigError("assignment refers to a missing ground truth");
    rows.push_back(r);
    cols.push_back(c);
  }
  std::vector<BoxD> gt_boxes;
  for (int c : cols) gt_boxes.push_back(gts[c].box);
  const Tensor gt_rows = rows.empty() ? Tensor() : boxes_to_rows(gt_boxes);

  DetectionLoss out;
  std::vector<Tensor> terms;
  for (const HeadOutput& head : heads) {
    const int k = head.logits.dim(0), classes = head.logits.dim(1);
    if (head.boxes.dim(0) != k || head.boxes.dim(1) != 4) throw ShapeError("head boxes must be [K,4]");

    Array targets = Array::Zero(Eigen::Index(k) * classes);
    for (std::size_t m = 0; m < rows.size(); ++m) {
      if (rows[m] >= k) throw ConfigError("assignment refers to a missing query");
      const BoxD pred = box_at(head.boxes, rows[m]);
      targets(Eigen::Index(rows[m]) * classes + gts[cols[m]].label) = expanded_iou(pred, gt_boxes[m], cfg.expand);
    }
    const Tensor cls = sum(bce_with_logits(head.logits, targets)) * norm;
    Tensor total = cls * cfg.weights.cls;
    HeadLoss hl;
    hl.cls = cls.item();
    if (!rows.empty()) {
      const Tensor matched = gather_rows(head.boxes, rows);
      const Tensor l1 = sum(abs(matched - gt_rows)) * norm;
      const Tensor iou_term =
          sum(1.0 - expanded_siou(boxes_from_rows(matched), boxes_from_rows(gt_rows), cfg.expand, cfg.siou)) * norm;
      total = total + l1 * cfg.weights.l1 + iou_term * cfg.weights.iou;
      hl.l1 = l1.item();
      hl.iou = iou_term.item();
    }
    hl.total = total.item();
    out.cls += hl.cls;
    out.l1 += hl.l1;
    out.iou += hl.iou;
    out.heads.push_back(hl);
    terms.push_back(total);
  }
  out.total = terms.front();
  for (std::size_t h = 1; h < terms.size(); ++h) out.total = out.total + terms[h];
  return out;
}

}  // namespace sodetr
