#include "sodetr/gradcheck.hpp"
#include "sodetr/query_selection.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace sodetr;
using sodetr::testing::random_box;

namespace {

Mask all_valid(int n) { return Mask::Constant(n, true); }

}  // namespace

TEST(Anchors, SingleLevelGrid) {
  const AnchorSet a = generate_anchors({{2, 2}}, {});
  ASSERT_EQ(a.size(), 4);
  const double expect[4][2] = {{0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}};
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(sigmoid(a.logits(i, 0)), expect[i][0], 1e-12);
    EXPECT_NEAR(sigmoid(a.logits(i, 1)), expect[i][1], 1e-12);
    EXPECT_NEAR(sigmoid(a.logits(i, 2)), 0.05, 1e-12);
    EXPECT_NEAR(sigmoid(a.logits(i, 3)), 0.05, 1e-12);
    EXPECT_TRUE(a.valid(i));
  }
}

TEST(Anchors, PyramidCountsAndOffsets) {
  const AnchorSet a = generate_anchors({{24, 24}, {12, 12}, {6, 6}, {3, 3}}, {});
  EXPECT_EQ(a.size(), 765);
  EXPECT_EQ(a.level_offsets, (std::vector<int>{0, 576, 720, 756}));
  for (int i = 0; i < a.size(); ++i) {
    const int l = a.level[i];
    EXPECT_GE(i, a.level_offsets[l]);
    EXPECT_NEAR(sigmoid(a.logits(i, 2)), 0.05 * (1 << l), 1e-12);
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(sigmoid(a.logits(i, c)), 1.0 / (1.0 + std::exp(-a.logits(i, c))), 1e-12);
  }
  EXPECT_THROW(generate_anchors({}, {}), ConfigError);
}

TEST(Anchors, ValidityMaskFollowsMargin) {
  SelectionConfig cfg;
  cfg.eps = 0.1;
  cfg.base_size = 0.3;
  const AnchorSet a = generate_anchors({{8, 8}, {4, 4}, {2, 2}}, cfg);
  for (int i = 0; i < a.size(); ++i) {
    bool inside = true;
    for (int c = 0; c < 4; ++c) {
      const double s = sigmoid(a.logits(i, c));
      inside = inside && s >= cfg.eps && s <= 1 - cfg.eps;
    }
    EXPECT_EQ(bool(a.valid(i)), inside) << i;
  }
  // Level 2 boxes are 1.2 wide, level 0 edge centers sit at 1/16.
  EXPECT_FALSE(a.valid(a.level_offsets[2]));
  EXPECT_FALSE(a.valid(0));
  EXPECT_TRUE(a.valid(3 * 8 + 3));
}

TEST(Refine, ZeroDeltaRecoversAnchor) {
  const AnchorSet a = generate_anchors({{3, 3}}, {});
  for (int i = 0; i < a.size(); ++i) {
    const BoxD b = refine_in_logit_space({a.logits(i, 0), a.logits(i, 1), a.logits(i, 2), a.logits(i, 3)}, {});
    EXPECT_NEAR(b.cx, sigmoid(a.logits(i, 0)), 1e-15);
    EXPECT_NEAR(b.w, 0.05, 1e-15);
  }
}

TEST(Refine, SaturatesTowardOne) {
  const BoxD b = refine_in_logit_space({0, 0, 0, 0}, {20, 20, 20, 20});
  for (double v : {b.cx, b.cy, b.w, b.h}) {
    EXPECT_NEAR(v, 1.0, 1e-8);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Refine, AlwaysStrictlyInsideUnitInterval) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    std::array<double, 4> l, d;
    for (int c = 0; c < 4; ++c) {
      l[c] = rng.uniform(-10, 10);
      d[c] = rng.uniform(-500, 500);
    }
    const BoxD b = refine_in_logit_space(l, d);
    for (double v : {b.cx, b.cy, b.w, b.h}) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Refine, BatchedMatchesScalar) {
  Rng rng(2);
  const Tensor logits = sodetr::testing::random_tensor({5, 4}, rng, -3, 3, false);
  const Tensor delta = sodetr::testing::random_tensor({5, 4}, rng, -2, 2, false);
  const Tensor boxes = refine_in_logit_space(logits, delta);
  for (int i = 0; i < 5; ++i) {
    std::array<double, 4> l, d;
    for (int c = 0; c < 4; ++c) {
      l[c] = logits.at(i * 4 + c);
      d[c] = delta.at(i * 4 + c);
    }
    const BoxD b = refine_in_logit_space(l, d);
    EXPECT_NEAR(boxes.at(i * 4 + 0), b.cx, 1e-15);
    EXPECT_NEAR(boxes.at(i * 4 + 3), b.h, 1e-15);
  }
}

TEST(Refine, IouGradientWithRespectToDelta) {
  Rng rng(3);
  const BoxD gt{0.45, 0.55, 0.2, 0.15};
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor logits =
        Tensor::from_vector({1, 4}, {logit(rng.uniform(0.35, 0.65)), logit(rng.uniform(0.35, 0.65)),
                                     logit(rng.uniform(0.1, 0.3)), logit(rng.uniform(0.1, 0.3))});
    const Tensor delta = sodetr::testing::random_tensor({1, 4}, rng, -0.3, 0.3);
    auto f = [&](const Tensor& d) {
      const BoxT pred = boxes_from_rows(refine_in_logit_space(logits, d));
      const BoxT target = boxes_from_rows(boxes_to_rows({gt}));
      return sum(iou(pred, target));
    };
    EXPECT_LT(finite_diff_check(f, delta, 1e-6), 1e-4);
  }
}

TEST(EiouTarget, Examples) {
  const SelectionConfig cfg;
  const BoxD b{0.4, 0.4, 0.1, 0.1};
  EXPECT_EQ(eiou_classification_target(b, std::nullopt, cfg), 0.0);
  EXPECT_NEAR(eiou_classification_target(b, b, cfg), 1.0, 1e-12);
  const BoxD p{0.30, 0.5, 0.10, 0.10}, g{0.45, 0.5, 0.10, 0.10};
  EXPECT_NEAR(eiou_classification_target(p, g, cfg), 1.0 / 7.0, 1e-12);
  EXPECT_EQ(iou(p, g), 0.0);
}

TEST(EiouTarget, NearMissCorpusKeepsPositiveTargets) {
  Rng rng(4);
  const SelectionConfig cfg;
  int checked = 0;
  while (checked < 1000) {
    const BoxD g = random_box(rng, 0.02, 0.1);
    BoxD p = random_box(rng, 0.02, 0.1);
    p.cx = g.cx + rng.uniform(-0.15, 0.15);
    p.cy = g.cy + rng.uniform(-0.15, 0.15);
    if (iou(p, g) > 0) continue;
    const double target = eiou_classification_target(p, g, cfg);
    EXPECT_GE(target, iou(p, g));
    const double a = cfg.expand.alpha2;
    if (a * (p.w + g.w) / 2 > std::abs(p.cx - g.cx) && a * (p.h + g.h) / 2 > std::abs(p.cy - g.cy)) {
      EXPECT_GT(target, 0.0);
    }
    ++checked;
  }
}

TEST(TopK, Examples) {
  EXPECT_EQ(select_topk({0, 1, 2, 3, 4}, all_valid(5), 3), (std::vector<int>{4, 3, 2}));
  EXPECT_EQ(select_topk(std::vector<double>(6, 0.5), all_valid(6), 4), (std::vector<int>{0, 1, 2, 3}));
  Mask m = all_valid(5);
  m(4) = false;
  EXPECT_EQ(select_topk({0, 1, 2, 3, 4}, m, 2), (std::vector<int>{3, 2}));
  EXPECT_THROW(select_topk({0, 1, 2}, Mask(Mask::Constant(3, false)), 1), SelectionError);
  EXPECT_THROW(select_topk({0, 1, 2}, all_valid(3), 4), SelectionError);
}

TEST(TopK, InvariantUnderMonotoneTransforms) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(100);
    for (double& v : s) v = std::round(rng.uniform(-3, 3) * 4) / 4;  // plenty of ties
    Mask valid(100);
    for (int i = 0; i < 100; ++i) valid(i) = rng.uniform() > 0.2;
    const auto base = select_topk(s, valid, 20);
    std::vector<double> t1(s.size()), t2(s.size());
    std::transform(s.begin(), s.end(), t1.begin(), [](double v) { return std::exp(v) + 3; });
    std::transform(s.begin(), s.end(), t2.begin(), [](double v) { return sigmoid(2 * v); });
    EXPECT_EQ(select_topk(t1, valid, 20), base);
    EXPECT_EQ(select_topk(t2, valid, 20), base);
    EXPECT_EQ(select_topk(s, valid, 20), base);
    for (std::size_t i = 1; i < base.size(); ++i) {
      EXPECT_TRUE(s[base[i - 1]] > s[base[i]] || (s[base[i - 1]] == s[base[i]] && base[i - 1] < base[i]));
    }
  }
}

TEST(TopK, MaxClassScore) {
  RowMatrix m(2, 3);
  m << 0.1, 0.7, 0.2, -1.0, -3.0, -0.5;
  EXPECT_EQ(max_class_scores(m), (std::vector<double>{0.7, -0.5}));
}
