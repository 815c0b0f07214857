#include "sodetr/box.hpp"
#include "sodetr/gradcheck.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace sodetr;
using sodetr::testing::random_box;

namespace {

const SIoUParams kTheta4{4.0};

bool same(const BoxD& a, const BoxD& b, double tol) {
  return std::abs(a.cx - b.cx) <= tol && std::abs(a.cy - b.cy) <= tol && std::abs(a.w - b.w) <= tol &&
         std::abs(a.h - b.h) <= tol;
}

}  // namespace

TEST(Iou, Examples) {
  const BoxD a{0.5, 0.5, 0.2, 0.2};
  EXPECT_NEAR(iou(a, a), 1.0, 1e-12);
  EXPECT_NEAR(iou(a, BoxD{0.5, 0.5, 0.1, 0.1}), 0.25, 1e-15);
  EXPECT_EQ(iou(BoxD{0.25, 0.5, 0.2, 0.2}, BoxD{0.75, 0.5, 0.2, 0.2}), 0.0);
}

TEST(Iou, RejectsDegenerateBoxes) {
  const BoxD ok{0.5, 0.5, 0.1, 0.1};
  EXPECT_THROW(iou(ok, BoxD{0.5, 0.5, 0.0, 0.1}), GeometryError);
  EXPECT_THROW(iou(BoxD{0.5, 0.5, 0.1, -0.1}, ok), GeometryError);
  EXPECT_THROW(siou(ok, BoxD{0.5, 0.5, 0.1, 0.1}, SIoUParams{7.0}), GeometryError);
  EXPECT_THROW(expand(ok, 0.0), GeometryError);
}

TEST(Expand, Examples) {
  const BoxD b{0.5, 0.5, 0.1, 0.2};
  EXPECT_TRUE(same(expand(b, 1.0), b, 0.0));
  EXPECT_TRUE(same(expand(b, 2.0), BoxD{0.5, 0.5, 0.2, 0.4}, 1e-15));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const BoxD r = random_box(rng);
    const double s = rng.uniform(0.5, 3), t = rng.uniform(0.5, 3);
    EXPECT_TRUE(same(expand(expand(r, s), t), expand(r, s * t), 1e-15));
  }
}

TEST(ExpandedIou, Examples) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const BoxD a = random_box(rng), b = random_box(rng);
    EXPECT_EQ(expanded_iou(a, b, {1.0}), iou(a, b));
  }
  EXPECT_NEAR(expanded_iou(BoxD{0.5, 0.5, 0.2, 0.2}, BoxD{0.5, 0.5, 0.1, 0.1}, {2.0}), 0.25, 1e-15);

  const BoxD a{0.30, 0.5, 0.10, 0.10}, b{0.45, 0.5, 0.10, 0.10};
  EXPECT_EQ(iou(a, b), 0.0);
  EXPECT_NEAR(expanded_iou(a, b, {2.0}), 1.0 / 7.0, 1e-12);
  EXPECT_NEAR(raster_iou_oracle(expand(a, 2.0), expand(b, 2.0), 10000), 1.0 / 7.0, 1e-3);
}

TEST(ExpandedIou, CommonCenterInvariance) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    BoxD a = random_box(rng), b = random_box(rng);
    b.cx = a.cx;
    b.cy = a.cy;
    const double alpha = rng.uniform(0.2, 5.0);
    EXPECT_NEAR(expanded_iou(a, b, {alpha}), iou(a, b), 1e-12);
  }
}

TEST(ExpandedIou, CoverageGrowthForDisjointBoxes) {
  Rng rng(4);
  int checked = 0;
  while (checked < 200) {
    const BoxD a = random_box(rng), b = random_box(rng);
    if (iou(a, b) > 0) continue;
    const double alpha = rng.uniform(1.0, 6.0);
    if (alpha * (a.w + b.w) / 2 > std::abs(a.cx - b.cx) && alpha * (a.h + b.h) / 2 > std::abs(a.cy - b.cy)) {
      EXPECT_GT(expanded_iou(a, b, {alpha}), 0.0);
      ++checked;
    }
  }
}

TEST(Siou, Examples) {
  const BoxD a{0.5, 0.5, 0.2, 0.2};
  EXPECT_NEAR(siou(a, a, kTheta4), 1.0, 1e-12);
  const double omega = 2 * std::pow(1 - std::exp(-0.5), 4);
  EXPECT_NEAR(siou(a, BoxD{0.5, 0.5, 0.1, 0.1}, kTheta4), 0.25 - omega / 2, 1e-12);
  EXPECT_NEAR(siou(a, BoxD{0.5, 0.5, 0.1, 0.1}, kTheta4), 0.2260, 5e-5);
  const double far = siou(BoxD{0.2, 0.2, 0.1, 0.1}, BoxD{0.8, 0.8, 0.1, 0.1}, kTheta4);
  EXPECT_GE(far, -1.0);
  EXPECT_LT(far, 0.0);
}

// Independent transcription of the angle/distance/shape cost.
TEST(Siou, MatchesHandEvaluation) {
  const BoxD a{0.3, 0.4, 0.2, 0.1}, b{0.45, 0.5, 0.1, 0.3};
  const double dx = 0.15, dy = 0.1;
  const double sigma = std::hypot(dx, dy);
  const double lambda = 1 - 2 * std::pow(std::sin(std::asin(std::min(dx, dy) / sigma) - std::numbers::pi / 4), 2);
  const double gamma = 2 - lambda;
  const double cw = 0.5 - 0.2, ch = 0.65 - 0.35;
  const double delta = (1 - std::exp(-gamma * std::pow(dx / cw, 2))) + (1 - std::exp(-gamma * std::pow(dy / ch, 2)));
  const double omega = std::pow(1 - std::exp(-0.1 / 0.2), 4) + std::pow(1 - std::exp(-0.2 / 0.3), 4);
  const double inter = (0.4 - 0.4) * 0.0;  // touching along x: a.x2 = 0.4 = b.x1
  const double expected = inter - (delta + omega) / 2;
  EXPECT_NEAR(siou(a, b, kTheta4), expected, 1e-12);
}

TEST(ExpandedSiou, Examples) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const BoxD a = random_box(rng), b = random_box(rng);
    EXPECT_EQ(expanded_siou(a, b, {1.0}, kTheta4), siou(a, b, kTheta4));
  }
  const BoxD a{0.5, 0.5, 0.2, 0.2};
  EXPECT_NEAR(expanded_siou(a, a, {2.0}, kTheta4), 1.0, 1e-12);
  const BoxD p{0.30, 0.5, 0.10, 0.10}, q{0.45, 0.5, 0.10, 0.10};
  EXPECT_NEAR(expanded_siou(p, q, {2.0}, kTheta4), siou(p, q, kTheta4) + 1.0 / 7.0, 1e-12);
}

TEST(BoxProperties, SymmetryAndRange) {
  Rng rng(6);
  for (int i = 0; i < 500; ++i) {
    const BoxD a = random_box(rng), b = random_box(rng);
    const ExpandParams e{rng.uniform(1.0, 3.0)};
    EXPECT_NEAR(iou(a, b), iou(b, a), 1e-12);
    EXPECT_NEAR(expanded_iou(a, b, e), expanded_iou(b, a, e), 1e-12);
    EXPECT_NEAR(siou(a, b, kTheta4), siou(b, a, kTheta4), 1e-12);
    EXPECT_NEAR(expanded_siou(a, b, e, kTheta4), expanded_siou(b, a, e, kTheta4), 1e-12);
    EXPECT_GE(iou(a, b), 0.0);
    EXPECT_LE(iou(a, b), 1.0);
    EXPECT_GE(expanded_iou(a, b, e), 0.0);
    EXPECT_LE(expanded_iou(a, b, e), 1.0);
    EXPECT_LE(siou(a, b, kTheta4), 1.0);
    EXPECT_LE(expanded_siou(a, b, e, kTheta4), 1.0);
  }
}

TEST(RasterOracle, AgreesWithAnalyticIou) {
  Rng rng(7);
  EXPECT_EQ(raster_iou_oracle({0.5, 0.5, 0.2, 0.2}, {0.5, 0.5, 0.2, 0.2}, 1000), 1.0);
  EXPECT_EQ(raster_iou_oracle({0.2, 0.2, 0.1, 0.1}, {0.8, 0.8, 0.1, 0.1}, 1000), 0.0);
  for (int i = 0; i < 1000; ++i) {
    const BoxD a = random_box(rng), b = random_box(rng);
    EXPECT_NEAR(raster_iou_oracle(a, b, 10000), iou(a, b), 1e-3);
    EXPECT_NEAR(raster_iou_oracle(expand(a, 2.0), expand(b, 2.0), 10000), expanded_iou(a, b, {2.0}), 1e-3);
  }
}

TEST(BoxCodec, CornersRoundTrip) {
  const CornerBox c = to_corners({0.5, 0.5, 0.2, 0.2});
  EXPECT_NEAR(c.x1, 0.4, 1e-15);
  EXPECT_NEAR(c.y1, 0.4, 1e-15);
  EXPECT_NEAR(c.x2, 0.6, 1e-15);
  EXPECT_NEAR(c.y2, 0.6, 1e-15);
  const CornerBox edge = to_corners({0.05, 0.05, 0.2, 0.2});
  EXPECT_NEAR(edge.x1, -0.05, 1e-15);
  EXPECT_THROW(from_corners({0.6, 0.4, 0.4, 0.6}), GeometryError);
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const BoxD b = random_box(rng);
    EXPECT_TRUE(same(from_corners(to_corners(b)), b, 1e-12));
  }
}

TEST(BoxBatch, TensorPathMatchesScalarPath) {
  Rng rng(9);
  std::vector<BoxD> as, bs;
  for (int i = 0; i < 20; ++i) {
    as.push_back(random_box(rng));
    bs.push_back(random_box(rng));
  }
  const BoxT ta = boxes_from_rows(boxes_to_rows(as)), tb = boxes_from_rows(boxes_to_rows(bs));
  const Tensor v = expanded_siou(ta, tb, {2.0}, kTheta4);
  const Tensor g = giou(ta, tb);
  for (int i = 0; i < 20; ++i) {
    EXPECT_NEAR(v.at(i), expanded_siou(as[i], bs[i], {2.0}, kTheta4), 1e-14);
    EXPECT_NEAR(g.at(i), giou(as[i], bs[i]), 1e-14);
  }
}

TEST(BoxGrad, OneMinusExpandedSiouPassesFiniteDifferences) {
  Rng rng(10);
  int checked = 0;
  while (checked < 25) {
    const BoxD a = random_box(rng, 0.05, 0.3), b = random_box(rng, 0.05, 0.3);
    // Stay away from kinks: touching edges, equal sizes, aligned centers.
    const BoxD ea = expand(a, 2.0), eb = expand(b, 2.0);
    const double gaps[] = {ea.x2() - eb.x1(), eb.x2() - ea.x1(), ea.y2() - eb.y1(), eb.y2() - ea.y1(),
                           ea.x1() - eb.x1(), ea.x2() - eb.x2(), ea.y1() - eb.y1(), ea.y2() - eb.y2(),
                           a.x1() - b.x1(),   a.x2() - b.x2(),   a.y1() - b.y1(),   a.y2() - b.y2(),
                           a.w - b.w,         a.h - b.h,         a.cx - b.cx,       a.cy - b.cy,
                           std::abs(a.cx - b.cx) - std::abs(a.cy - b.cy)};
    if (std::any_of(std::begin(gaps), std::end(gaps), [](double g) { return std::abs(g) < 1e-3; })) continue;
    const Tensor x = Tensor::from_vector({8}, {a.cx, a.cy, a.w, a.h, b.cx, b.cy, b.w, b.h});
    auto f = [](const Tensor& t) {
      const BoxT p = boxes_from_rows(reshape(slice_cols(reshape(t, {1, 8}), 0, 4), {1, 4}));
      const BoxT q = boxes_from_rows(reshape(slice_cols(reshape(t, {1, 8}), 4, 4), {1, 4}));
      return sum(1.0 - expanded_siou(p, q, {2.0}, kTheta4));
    };
    EXPECT_LT(finite_diff_check(f, x, 1e-6), 1e-4);
    ++checked;
  }
}
