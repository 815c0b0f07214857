#pragma once

#include "sodetr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace sodetr {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Axis-aligned box in normalized center-size form.
///
/// Scalar is `double` for single boxes or `Tensor` for a batch of boxes held
/// column-wise (each field shaped [N]); every geometry function below is
/// written once for both.
template <typename Scalar>
struct Box {
  Scalar cx, cy, w, h;

  Scalar x1() const { return cx - w * 0.5; }
  Scalar y1() const { return cy - h * 0.5; }
  Scalar x2() const { return cx + w * 0.5; }
  Scalar y2() const { return cy + h * 0.5; }
  Scalar area() const { return w * h; }
};

using BoxD = Box<double>;
using BoxT = Box<Tensor>;

struct CornerBox {
  double x1, y1, x2, y2;
};

struct ExpandParams {
  double alpha2 = 2.0;
};

struct SIoUParams {
  double theta = 4.0;
};

// Scalar overloads mirroring the Tensor free functions in ops.hpp.
inline double minimum(double a, double b) { return a <= b ? a : b; }
inline double maximum(double a, double b) { return a >= b ? a : b; }
inline double clamp_min(double x, double lo) { return x > lo ? x : lo; }
inline double select(bool m, double a, double b) { return m ? a : b; }
inline bool positive(double x) { return x > 0; }
inline Mask positive(const Tensor& x) { return x.value() > 0; }
inline double constant_like(double, double c) { return c; }
inline Tensor constant_like(const Tensor& x, double c) { return Tensor::full(x.shape(), c); }

inline void validate(const BoxD& b) {
  if (!(b.w > 0) || !(b.h > 0) || !std::isfinite(b.cx) || !std::isfinite(b.cy) || !std::isfinite(b.w) ||
      !std::isfinite(b.h)) {
    throw GeometryError("degenerate box (w and h must be positive and finite)");
  }
}

template <typename Scalar>
void check(const Box<Scalar>& b) {
  if constexpr (std::is_same_v<Scalar, double>) validate(b);
}

inline CornerBox to_corners(const BoxD& b) {
  validate(b);
  return {b.x1(), b.y1(), b.x2(), b.y2()};
}

inline BoxD from_corners(const CornerBox& c) {
  if (!(c.x1 < c.x2) || !(c.y1 < c.y2)) throw GeometryError("inverted corners");
  return {(c.x1 + c.x2) * 0.5, (c.y1 + c.y2) * 0.5, c.x2 - c.x1, c.y2 - c.y1};
}

/// Same center, width and height scaled by alpha2.
template <typename Scalar>
Box<Scalar> expand(const Box<Scalar>& b, double alpha2) {
  if (!(alpha2 > 0)) throw GeometryError("expansion factor must be positive");
  return {b.cx, b.cy, b.w * alpha2, b.h * alpha2};
}

/// Overlap area; subgradient 0 when the boxes merely touch.
template <typename Scalar>
Scalar intersection(const Box<Scalar>& a, const Box<Scalar>& b) {
  const Scalar iw = clamp_min(minimum(a.x2(), b.x2()) - maximum(a.x1(), b.x1()), 0.0);
  const Scalar ih = clamp_min(minimum(a.y2(), b.y2()) - maximum(a.y1(), b.y1()), 0.0);
  return iw * ih;
}

template <typename Scalar>
Scalar iou(const Box<Scalar>& a, const Box<Scalar>& b) {
  check(a);
  check(b);
  const Scalar inter = intersection(a, b);
  return inter / (a.area() + b.area() - inter);
}

template <typename Scalar>
Scalar expanded_iou(const Box<Scalar>& a, const Box<Scalar>& b, const ExpandParams& p) {
  check(a);
  check(b);
  return iou(expand(a, p.alpha2), expand(b, p.alpha2));
}

/// (Delta + Omega) / 2: the angle-aware distance cost plus the shape cost.
template <typename Scalar>
Scalar siou_penalty(const Box<Scalar>& a, const Box<Scalar>& b, const SIoUParams& p) {
  using std::abs;
  using std::asin;
  using std::exp;
  using std::pow;
  using std::sin;
  using std::sqrt;
  if (!(p.theta >= 2.0 && p.theta <= 6.0)) throw GeometryError("SIoU theta must lie in [2, 6]");
  const Scalar dx = b.cx - a.cx;
  const Scalar dy = b.cy - a.cy;
  const Scalar adx = abs(dx), ady = abs(dy);

  // Angle cost; defined as 0 at coincident centers where the angle is 0/0.
  const Scalar sigma_sq = dx * dx + dy * dy;
  const auto apart = positive(sigma_sq);
  const Scalar sigma = sqrt(select(apart, sigma_sq, constant_like(sigma_sq, 1.0)));
  const Scalar sin_alpha = minimum(adx, ady) / sigma;
  const Scalar shifted = asin(sin_alpha) - std::numbers::pi / 4.0;
  const Scalar s = sin(shifted);
  const Scalar lambda = select(apart, 1.0 - 2.0 * s * s, constant_like(sigma_sq, 0.0));
  const Scalar gamma = 2.0 - lambda;

  const Scalar enc_w = maximum(a.x2(), b.x2()) - minimum(a.x1(), b.x1());
  const Scalar enc_h = maximum(a.y2(), b.y2()) - minimum(a.y1(), b.y1());
  const Scalar rho_x = (dx / enc_w) * (dx / enc_w);
  const Scalar rho_y = (dy / enc_h) * (dy / enc_h);
  const Scalar distance = (1.0 - exp(-(gamma * rho_x))) + (1.0 - exp(-(gamma * rho_y)));

  const Scalar omega_w = abs(a.w - b.w) / maximum(a.w, b.w);
  const Scalar omega_h = abs(a.h - b.h) / maximum(a.h, b.h);
  const Scalar shape = pow(1.0 - exp(-omega_w), p.theta) + pow(1.0 - exp(-omega_h), p.theta);
  return (distance + shape) * 0.5;
}

template <typename Scalar>
Scalar siou(const Box<Scalar>& a, const Box<Scalar>& b, const SIoUParams& p) {
  return iou(a, b) - siou_penalty(a, b, p);
}

/// SIoU - IoU + Expanded-IoU, evaluated as Expanded-IoU minus the SIoU
/// penalty so that alpha2 == 1 reproduces siou() bit for bit.
template <typename Scalar>
Scalar expanded_siou(const Box<Scalar>& a, const Box<Scalar>& b, const ExpandParams& e, const SIoUParams& s) {
  return expanded_iou(a, b, e) - siou_penalty(a, b, s);
}

template <typename Scalar>
Scalar giou(const Box<Scalar>& a, const Box<Scalar>& b) {
  check(a);
  check(b);
  const Scalar inter = intersection(a, b);
  const Scalar uni = a.area() + b.area() - inter;
  const Scalar enc = (maximum(a.x2(), b.x2()) - minimum(a.x1(), b.x1())) *
                     (maximum(a.y2(), b.y2()) - minimum(a.y1(), b.y1()));
  return inter / uni - (enc - uni) / enc;
}

/// IoU by counting grid-cell centers inside each box. The grid spans the
/// pair's enclosing rectangle with `grid` cells per axis.
double raster_iou_oracle(const BoxD& a, const BoxD& b, int grid);

/// Batch of boxes from rows of an [N,4] tensor.
inline BoxT boxes_from_rows(const Tensor& rows) {
  return {column(rows, 0), column(rows, 1), column(rows, 2), column(rows, 3)};
}

inline Tensor boxes_to_rows(const std::vector<BoxD>& boxes) {
  Array v(static_cast<Eigen::Index>(boxes.size()) * 4);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    v.segment(Eigen::Index(i) * 4, 4) << boxes[i].cx, boxes[i].cy, boxes[i].w, boxes[i].h;
  }
  return Tensor({static_cast<int>(boxes.size()), 4}, std::move(v));
}

inline BoxD box_at(const Tensor& rows, int i) {
  const Array& v = rows.value();
  return {v(4 * i), v(4 * i + 1), v(4 * i + 2), v(4 * i + 3)};
}

}  // namespace sodetr
