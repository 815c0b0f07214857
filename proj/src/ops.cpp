#include "sodetr/ops.hpp"

#include "sodetr/fft.hpp"

#include <cmath>
#include <numbers>

namespace sodetr {

namespace {

using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void require_rank(const Tensor& x, int r, const char* op) {
  if (x.rank() != r) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                     to_string(x.shape()));
  }
}

// Reduces a gradient to the parent's size when that parent was broadcast.
void scatter(Gradients& g, const Node* parent, const Array& grad) {
  if (!parent->requires_grad) return;
  Array& s = g.slot(parent);
  if (s.size() == grad.size()) {
    s += grad;
  } else {
    s(0) += grad.sum();
  }
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  const bool same = a.shape() == b.shape();
  if (!same && a.numel() != 1 && b.numel() != 1) require_same(a, b, name);
  const Shape shape = (same || b.numel() == 1) ? a.shape() : b.shape();
  const Eigen::Index n = numel(shape);
  auto expand = [n](const Tensor& t) -> Array {
    return t.numel() == n ? t.value() : Array::Constant(n, t.value()(0));
  };
  const Array av = expand(a), bv = expand(b);
  Array out;
  switch (op) {
    case BinOp::kAdd: out = av + bv; break;
    case BinOp::kSub: out = av - bv; break;
    case BinOp::kMul: out = av * bv; break;
    case BinOp::kDiv: out = av / bv; break;
  }
  return make_result(shape, std::move(out), {a, b},
                     [op, n](const Node& self, const Array& g, Gradients& grads) {
                       const Node* pa = self.parents[0].get();
                       const Node* pb = self.parents[1].get();
                       auto val = [n](const Node* p) -> Array {
                         return p->value.size() == n ? p->value : Array::Constant(n, p->value(0));
                       };
                       switch (op) {
                         case BinOp::kAdd:
                           scatter(grads, pa, g);
                           scatter(grads, pb, g);
                           break;
                         case BinOp::kSub:
                           scatter(grads, pa, g);
                           scatter(grads, pb, -g);
                           break;
                         case BinOp::kMul:
                           if (pa->requires_grad) scatter(grads, pa, g * val(pb));
                           if (pb->requires_grad) scatter(grads, pb, g * val(pa));
                           break;
                         case BinOp::kDiv: {
                           const Array bv2 = val(pb);
                           if (pa->requires_grad) scatter(grads, pa, g / bv2);
                           if (pb->requires_grad) scatter(grads, pb, -g * self.value / bv2);
                           break;
                         }
                       }
                     });
}

// Elementwise unary op; deriv(x, y) gives dy/dx.
template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D deriv) {
  Array y = f(x.value());
  return make_result(x.shape(), std::move(y), {x},
                     [deriv](const Node& self, const Array& g, Gradients& grads) {
                       const Node* p = self.parents[0].get();
                       grads.slot(p) += g * deriv(p->value, self.value);
                     });
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kDiv, "div"); }

Tensor add_scalar(const Tensor& x, double c) {
  return unary(
      x, [c](const Array& v) -> Array { return v + c; },
      [](const Array& v, const Array&) -> Array { return Array::Ones(v.size()); });
}

Tensor mul_scalar(const Tensor& x, double c) {
  return unary(
      x, [c](const Array& v) -> Array { return v * c; },
      [c](const Array& v, const Array&) -> Array { return Array::Constant(v.size(), c); });
}

Tensor rdiv_scalar(double c, const Tensor& x) {
  return unary(
      x, [c](const Array& v) -> Array { return c / v; },
      [](const Array& v, const Array& y) -> Array { return -y / v; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](const Array& v) -> Array { return v.exp(); },
      [](const Array&, const Array& y) -> Array { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](const Array& v) -> Array { return v.log(); },
      [](const Array& v, const Array&) -> Array { return v.inverse(); });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, [](const Array& v) -> Array { return v.sqrt(); },
      [](const Array&, const Array& y) -> Array { return 0.5 / y; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](const Array& v) -> Array { return v.abs(); },
      [](const Array& v, const Array&) -> Array {
        return (v > 0).cast<double>() - (v < 0).cast<double>();
      });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](const Array& v) -> Array { return v.square(); },
      [](const Array& v, const Array&) -> Array { return 2.0 * v; });
}

Tensor pow(const Tensor& x, double p) {
  return unary(
      x, [p](const Array& v) -> Array { return v.pow(p); },
      [p](const Array& v, const Array&) -> Array {
        return (v > 0).select(p * v.pow(p - 1.0), Array::Zero(v.size()));
      });
}

Tensor asin(const Tensor& x) {
  return unary(
      x, [](const Array& v) -> Array { return v.asin(); },
      [](const Array& v, const Array&) -> Array { return (1.0 - v.square()).rsqrt(); });
}

Tensor sin(const Tensor& x) {
  return unary(
      x, [](const Array& v) -> Array { return v.sin(); },
      [](const Array& v, const Array&) -> Array { return v.cos(); });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](const Array& v) -> Array { return v.max(0.0); },
      [](const Array& v, const Array&) -> Array { return (v > 0).cast<double>(); });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, [](const Array& v) -> Array { return v * v.unaryExpr(&normal_cdf); },
      [](const Array& v, const Array&) -> Array {
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        return v.unaryExpr(&normal_cdf) + v * inv_sqrt_2pi * (-0.5 * v.square()).exp();
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](const Array& v) -> Array { return (1.0 + (-v).exp()).inverse(); },
      [](const Array&, const Array& y) -> Array { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x,
      [](const Array& v) -> Array { return v.max(0.0) + (-v.abs()).exp().log1p(); },
      [](const Array& v, const Array&) -> Array { return (1.0 + (-v).exp()).inverse(); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, [lo, hi](const Array& v) -> Array { return v.max(lo).min(hi); },
      [lo, hi](const Array& v, const Array&) -> Array { return ((v > lo) && (v < hi)).cast<double>(); });
}

Tensor clamp_min(const Tensor& x, double lo) {
  return unary(
      x, [lo](const Array& v) -> Array { return v.max(lo); },
      [lo](const Array& v, const Array&) -> Array { return (v > lo).cast<double>(); });
}

Tensor select(const Mask& mask, const Tensor& a, const Tensor& b) {
  require_same(a, b, "select");
  if (mask.size() != a.numel()) throw ShapeError("select: mask size mismatch");
  Array out = mask.select(a.value(), b.value());
  return make_result(a.shape(), std::move(out), {a, b},
                     [mask](const Node& self, const Array& g, Gradients& grads) {
                       const Node* pa = self.parents[0].get();
                       const Node* pb = self.parents[1].get();
                       const Array zero = Array::Zero(g.size());
                       if (pa->requires_grad) grads.slot(pa) += mask.select(g, zero);
                       if (pb->requires_grad) grads.slot(pb) += mask.select(zero, g);
                     });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same(a, b, "minimum");
  return select(a.value() <= b.value(), a, b);
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  require_same(a, b, "maximum");
  return select(a.value() >= b.value(), a, b);
}

Tensor sum(const Tensor& x) {
  return make_result({1}, Array::Constant(1, x.value().sum()), {x},
                     [](const Node& self, const Array& g, Gradients& grads) {
                       const Node* p = self.parents[0].get();
                       grads.slot(p) += g(0);
                     });
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  return make_result(shape, x.value(), {x}, [](const Node& self, const Array& g, Gradients& grads) {
    grads.slot(self.parents[0].get()) += g;
  });
}

Tensor concat(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat of nothing");
  Shape shape = xs[0].shape();
  int rows = 0;
  for (const Tensor& x : xs) {
    if (x.rank() != static_cast<int>(shape.size()) ||
        !std::equal(shape.begin() + 1, shape.end(), x.shape().begin() + 1)) {
      throw ShapeError("concat: trailing shape mismatch " + to_string(x.shape()));
    }
    rows += x.dim(0);
  }
  shape[0] = rows;
  Array out(numel(shape));
  Eigen::Index off = 0;
  std::vector<Eigen::Index> sizes;
  for (const Tensor& x : xs) {
    out.segment(off, x.numel()) = x.value();
    off += x.numel();
    sizes.push_back(x.numel());
  }
  return make_result(shape, std::move(out), xs,
                     [sizes](const Node& self, const Array& g, Gradients& grads) {
                       Eigen::Index o = 0;
                       for (std::size_t i = 0; i < sizes.size(); ++i) {
                         const Node* p = self.parents[i].get();
                         if (p->requires_grad) grads.slot(p) += g.segment(o, sizes[i]);
                         o += sizes[i];
                       }
                     });
}

Tensor slice(const Tensor& x, int begin, int end) {
  if (begin < 0 || end > x.dim(0) || begin >= end) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                     to_string(x.shape()));
  }
  Shape shape = x.shape();
  const Eigen::Index inner = x.numel() / shape[0];
  shape[0] = end - begin;
  const Eigen::Index off = begin * inner, len = (end - begin) * inner;
  return make_result(shape, x.value().segment(off, len), {x},
                     [off, len](const Node& self, const Array& g, Gradients& grads) {
                       grads.slot(self.parents[0].get()).segment(off, len) += g;
                     });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const int r = x.dim(0), c = x.dim(1);
  Array out(x.numel());
  MutMap(out.data(), c, r) = ConstMap(x.value().data(), r, c).transpose();
  return make_result({c, r}, std::move(out), {x},
                     [r, c](const Node& self, const Array& g, Gradients& grads) {
                       Array& s = grads.slot(self.parents[0].get());
                       MutMap(s.data(), r, c) += ConstMap(g.data(), c, r).transpose();
                     });
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
  require_rank(x, 2, "gather_rows");
  const int n = x.dim(0), d = x.dim(1);
  for (int r : rows) {
    if (r < 0 || r >= n) throw ShapeError("gather_rows: index out of range");
  }
  const int k = static_cast<int>(rows.size());
  if (k == 0) throw ShapeError("gather_rows: empty index list");
  Array out(static_cast<Eigen::Index>(k) * d);
  for (int i = 0; i < k; ++i) out.segment(Eigen::Index(i) * d, d) = x.value().segment(Eigen::Index(rows[i]) * d, d);
  return make_result({k, d}, std::move(out), {x},
                     [rows, d](const Node& self, const Array& g, Gradients& grads) {
                       Array& s = grads.slot(self.parents[0].get());
                       for (std::size_t i = 0; i < rows.size(); ++i)
                         s.segment(Eigen::Index(rows[i]) * d, d) += g.segment(Eigen::Index(i) * d, d);
                     });
}

Tensor slice_cols(const Tensor& x, int begin, int count) {
  require_rank(x, 2, "slice_cols");
  const int n = x.dim(0), d = x.dim(1);
  if (begin < 0 || count <= 0 || begin + count > d) throw ShapeError("slice_cols out of range");
  Array out(Eigen::Index(n) * count);
  MutMap(out.data(), n, count) = ConstMap(x.value().data(), n, d).middleCols(begin, count);
  return make_result({n, count}, std::move(out), {x},
                     [n, d, begin, count](const Node& self, const Array& g, Gradients& grads) {
                       Array& s = grads.slot(self.parents[0].get());
                       MutMap(s.data(), n, d).middleCols(begin, count) += ConstMap(g.data(), n, count);
                     });
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat_cols of nothing");
  const int n = xs[0].dim(0);
  int d = 0;
  std::vector<int> widths;
  for (const Tensor& x : xs) {
    require_rank(x, 2, "concat_cols");
    if (x.dim(0) != n) throw ShapeError("concat_cols: row mismatch");
    widths.push_back(x.dim(1));
    d += x.dim(1);
  }
  Array out(Eigen::Index(n) * d);
  MutMap om(out.data(), n, d);
  int c = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    om.middleCols(c, widths[i]) = ConstMap(xs[i].value().data(), n, widths[i]);
    c += widths[i];
  }
  return make_result({n, d}, std::move(out), xs,
                     [n, d, widths](const Node& self, const Array& g, Gradients& grads) {
                       ConstMap gm(g.data(), n, d);
                       int c0 = 0;
                       for (std::size_t i = 0; i < widths.size(); ++i) {
                         const Node* p = self.parents[i].get();
                         if (p->requires_grad) {
                           Array& s = grads.slot(p);
                           MutMap(s.data(), n, widths[i]) += gm.middleCols(c0, widths[i]);
                         }
                         c0 += widths[i];
                       }
                     });
}

Tensor column(const Tensor& x, int j) { return reshape(slice_cols(x, j, 1), {x.dim(0)}); }

Tensor stack_cols(const std::vector<Tensor>& cols) {
  std::vector<Tensor> parts;
  parts.reserve(cols.size());
  for (const Tensor& c : cols) parts.push_back(reshape(c, {static_cast<int>(c.numel()), 1}));
  return concat_cols(parts);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul: inner dims " + to_string(a.shape()) + " x " + to_string(b.shape()));
  Array out(Eigen::Index(n) * m);
  MutMap(out.data(), n, m).noalias() = ConstMap(a.value().data(), n, k) * ConstMap(b.value().data(), k, m);
  return make_result({n, m}, std::move(out), {a, b},
                     [n, k, m](const Node& self, const Array& g, Gradients& grads) {
                       const Node* pa = self.parents[0].get();
                       const Node* pb = self.parents[1].get();
                       ConstMap gm(g.data(), n, m);
                       if (pa->requires_grad) {
                         Array& s = grads.slot(pa);
                         MutMap(s.data(), n, k).noalias() += gm * ConstMap(pb->value.data(), k, m).transpose();
                       }
                       if (pb->requires_grad) {
                         Array& s = grads.slot(pb);
                         MutMap(s.data(), k, m).noalias() += ConstMap(pa->value.data(), n, k).transpose() * gm;
                       }
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const int n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  if (w.dim(1) != in) throw ShapeError("linear: weight " + to_string(w.shape()) + " vs input " + to_string(x.shape()));
  const bool has_bias = b.defined();
  if (has_bias && b.numel() != out_dim) throw ShapeError("linear: bias size");
  Array out(Eigen::Index(n) * out_dim);
  MutMap om(out.data(), n, out_dim);
  om.noalias() = ConstMap(x.value().data(), n, in) * ConstMap(w.value().data(), out_dim, in).transpose();
  if (has_bias) om.rowwise() += b.value().matrix().transpose();
  std::vector<Tensor> parents{x, w};
  if (has_bias) parents.push_back(b);
  return make_result({n, out_dim}, std::move(out), parents,
                     [n, in, out_dim](const Node& self, const Array& g, Gradients& grads) {
                       const Node* px = self.parents[0].get();
                       const Node* pw = self.parents[1].get();
                       ConstMap gm(g.data(), n, out_dim);
                       if (px->requires_grad) {
                         Array& s = grads.slot(px);
                         MutMap(s.data(), n, in).noalias() += gm * ConstMap(pw->value.data(), out_dim, in);
                       }
                       if (pw->requires_grad) {
                         Array& s = grads.slot(pw);
                         MutMap(s.data(), out_dim, in).noalias() += gm.transpose() * ConstMap(px->value.data(), n, in);
                       }
                       if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                         grads.slot(self.parents[2].get()) += gm.colwise().sum().transpose().array();
                       }
                     });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const int n = x.dim(0), d = x.dim(1);
  Array out(x.numel());
  MutMap om(out.data(), n, d);
  ConstMap xm(x.value().data(), n, d);
  om = (xm.colwise() - xm.rowwise().maxCoeff()).array().exp().matrix();
  om.array().colwise() /= om.rowwise().sum().array();
  return make_result(x.shape(), std::move(out), {x},
                     [n, d](const Node& self, const Array& g, Gradients& grads) {
                       ConstMap y(self.value.data(), n, d);
                       ConstMap gm(g.data(), n, d);
                       const Eigen::VectorXd dot = (y.array() * gm.array()).rowwise().sum().matrix();
                       Array& s = grads.slot(self.parents[0].get());
                       MutMap(s.data(), n, d).array() += y.array() * (gm.colwise() - dot).array();
                     });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "layer_norm_rows");
  const int n = x.dim(0), d = x.dim(1);
  if (gamma.numel() != d || beta.numel() != d) throw ShapeError("layer_norm_rows: affine size");
  ConstMap xm(x.value().data(), n, d);
  const Eigen::VectorXd mu = xm.rowwise().mean();
  RowMatrix centered = xm.colwise() - mu;
  const Eigen::VectorXd inv_std =
      ((centered.array().square().rowwise().sum() / d) + eps).rsqrt().matrix();
  RowMatrix xhat = centered.array().colwise() * inv_std.array();
  Array out(x.numel());
  MutMap om(out.data(), n, d);
  om = (xhat.array().rowwise() * gamma.value().transpose()).rowwise() + beta.value().transpose();
  auto xhat_ptr = std::make_shared<RowMatrix>(std::move(xhat));
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [n, d, xhat_ptr, inv_std](const Node& self, const Array& g, Gradients& grads) {
        const Node* px = self.parents[0].get();
        const Node* pg = self.parents[1].get();
        const Node* pb = self.parents[2].get();
        ConstMap gm(g.data(), n, d);
        const RowMatrix& xh = *xhat_ptr;
        if (pg->requires_grad) grads.slot(pg) += (gm.array() * xh.array()).colwise().sum().transpose();
        if (pb->requires_grad) grads.slot(pb) += gm.array().colwise().sum().transpose();
        if (px->requires_grad) {
          RowMatrix gx = gm.array().rowwise() * pg->value.transpose();
          const Eigen::VectorXd m1 = gx.rowwise().mean();
          const Eigen::VectorXd m2 = (gx.array() * xh.array()).rowwise().mean().matrix();
          RowMatrix dx = ((gx.colwise() - m1).array() - xh.array().colwise() * m2.array()).colwise() *
                         inv_std.array();
          Array& s = grads.slot(px);
          MutMap(s.data(), n, d) += dx;
        }
      });
}

namespace {

// cols[(c*k + ky)*k + kx, oy*wo + ox] = x[c, oy*s + ky - p, ox*s + kx - p]
void im2col(const double* x, int c, int h, int w, int k, int s, int p, int ho, int wo, double* cols) {
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols + (Eigen::Index(ch * k + ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s + ky - p;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s + kx - p;
            row[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? x[(Eigen::Index(ch) * h + iy) * w + ix] : 0.0;
          }
        }
      }
}

void col2im(const double* cols, int c, int h, int w, int k, int s, int p, int ho, int wo, double* x) {
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols + (Eigen::Index(ch * k + ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s + ky - p;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s + kx - p;
            if (ix >= 0 && ix < w) x[(Eigen::Index(ch) * h + iy) * w + ix] += row[oy * wo + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) {
    throw ShapeError("conv2d: channel mismatch, input " + to_string(x.shape()) + " weight " + to_string(w.shape()));
  }
  if (w.dim(3) != k || stride < 1 || padding < 0) throw ShapeError("conv2d: bad kernel/stride/padding");
  const bool has_bias = b.defined();
  if (has_bias && b.numel() != cout) throw ShapeError("conv2d: bias size");
  const int ho = (h + 2 * padding - k) / stride + 1;
  const int wo = (wd + 2 * padding - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: output would be empty");
  const int kk = cin * k * k;
  const int npix = ho * wo;
  const bool direct = k == 1 && stride == 1 && padding == 0;
  std::shared_ptr<Array> cols;
  if (!direct) {
    cols = std::make_shared<Array>(Eigen::Index(kk) * npix);
    im2col(x.value().data(), cin, h, wd, k, stride, padding, ho, wo, cols->data());
  }
  const double* col_data = direct ? x.value().data() : cols->data();
  Array out(Eigen::Index(cout) * npix);
  MutMap om(out.data(), cout, npix);
  om.noalias() = ConstMap(w.value().data(), cout, kk) * ConstMap(col_data, kk, npix);
  if (has_bias) om.colwise() += b.value().matrix();
  std::vector<Tensor> parents{x, w};
  if (has_bias) parents.push_back(b);
  return make_result(
      {cout, ho, wo}, std::move(out), parents,
      [=](const Node& self, const Array& g, Gradients& grads) {
        const Node* px = self.parents[0].get();
        const Node* pw = self.parents[1].get();
        ConstMap gm(g.data(), cout, npix);
        const double* cd = direct ? px->value.data() : cols->data();
        if (pw->requires_grad) {
          Array& s = grads.slot(pw);
          MutMap(s.data(), cout, kk).noalias() += gm * ConstMap(cd, kk, npix).transpose();
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          grads.slot(self.parents[2].get()) += gm.rowwise().sum().array();
        }
        if (px->requires_grad) {
          Array& s = grads.slot(px);
          if (direct) {
            MutMap(s.data(), kk, npix).noalias() += ConstMap(pw->value.data(), cout, kk).transpose() * gm;
          } else {
            RowMatrix gcols = ConstMap(pw->value.data(), cout, kk).transpose() * gm;
            col2im(gcols.data(), cin, h, wd, k, stride, padding, ho, wo, s.data());
          }
        }
      });
}

Tensor upsample_nearest2x(const Tensor& x) {
  require_rank(x, 3, "upsample_nearest2x");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Array out(Eigen::Index(c) * 4 * h * w);
  const double* xv = x.value().data();
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        out((Eigen::Index(ch) * 2 * h + y) * 2 * w + xx) = xv[(Eigen::Index(ch) * h + y / 2) * w + xx / 2];
  return make_result({c, 2 * h, 2 * w}, std::move(out), {x},
                     [c, h, w](const Node& self, const Array& g, Gradients& grads) {
                       Array& s = grads.slot(self.parents[0].get());
                       for (int ch = 0; ch < c; ++ch)
                         for (int y = 0; y < 2 * h; ++y)
                           for (int xx = 0; xx < 2 * w; ++xx)
                             s((Eigen::Index(ch) * h + y / 2) * w + xx / 2) += g((Eigen::Index(ch) * 2 * h + y) * 2 * w + xx);
                     });
}

namespace {

// Copies the top-left min-size window between two stacks of grids.
void copy_window(const double* src, int sh, int sw, double* dst, int dh, int dw, Eigen::Index batch, bool accumulate) {
  const int h = std::min(sh, dh), w = std::min(sw, dw);
  for (Eigen::Index bi = 0; bi < batch; ++bi)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double v = src[(bi * sh + y) * sw + x];
        double& d = dst[(bi * dh + y) * dw + x];
        d = accumulate ? d + v : v;
      }
}

Tensor resize_window(const Tensor& x, int h, int w) {
  if (x.rank() < 2) throw ShapeError("pad/crop needs rank >= 2");
  const int sh = x.dim(-2), sw = x.dim(-1);
  const Eigen::Index batch = x.numel() / (Eigen::Index(sh) * sw);
  Shape shape = x.shape();
  shape[shape.size() - 2] = h;
  shape[shape.size() - 1] = w;
  Array out = Array::Zero(numel(shape));
  copy_window(x.value().data(), sh, sw, out.data(), h, w, batch, false);
  return make_result(shape, std::move(out), {x},
                     [sh, sw, h, w, batch](const Node& self, const Array& g, Gradients& grads) {
                       Array& s = grads.slot(self.parents[0].get());
                       copy_window(g.data(), h, w, s.data(), sh, sw, batch, true);
                     });
}

}  // namespace

Tensor pad2d(const Tensor& x, int h, int w) {
  if (h < x.dim(-2) || w < x.dim(-1)) throw ShapeError("pad2d: target smaller than input");
  return resize_window(x, h, w);
}

Tensor crop2d(const Tensor& x, int h, int w) {
  if (h > x.dim(-2) || w > x.dim(-1) || h <= 0 || w <= 0) throw ShapeError("crop2d: bad window");
  return resize_window(x, h, w);
}

Tensor to_complex(const Tensor& re) {
  Shape shape = re.shape();
  shape.insert(shape.begin(), 1);
  const Tensor r = reshape(re, shape);
  return concat({r, Tensor::zeros(shape)});
}

namespace {

Shape drop_leading(const Shape& s) { return Shape(s.begin() + 1, s.end()); }

void require_complex(const Tensor& z, const char* op) {
  if (z.rank() < 3 || z.dim(0) != 2) {
    throw ShapeError(std::string(op) + ": expected complex tensor [2,...,H,W], got " + to_string(z.shape()));
  }
}

// Transforms every trailing H x W grid of a complex tensor.
Array transform_all(const Array& v, int h, int w, bool inverse) {
  const Eigen::Index plane = v.size() / 2;
  const Eigen::Index grid = Eigen::Index(h) * w;
  const Eigen::Index batch = plane / grid;
  Array out(v.size());
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(grid));
  for (Eigen::Index bi = 0; bi < batch; ++bi) {
    const Eigen::Index off = bi * grid;
    for (Eigen::Index i = 0; i < grid; ++i) buf[i] = {v(off + i), v(plane + off + i)};
    detail::fft2_inplace(buf.data(), h, w, inverse);
    for (Eigen::Index i = 0; i < grid; ++i) {
      out(off + i) = buf[i].real();
      out(plane + off + i) = buf[i].imag();
    }
  }
  return out;
}

Tensor spectral(const Tensor& z, bool inverse) {
  require_complex(z, inverse ? "ifft2" : "fft2");
  const int h = z.dim(-2), w = z.dim(-1);
  Array out = transform_all(z.value(), h, w, inverse);
  // The adjoint of the unnormalized DFT is H*W times the inverse transform;
  // the adjoint of the inverse is the forward transform over H*W.
  return make_result(z.shape(), std::move(out), {z},
                     [h, w, inverse](const Node& self, const Array& g, Gradients& grads) {
                       const double hw = double(h) * w;
                       Array back = transform_all(g, h, w, !inverse);
                       grads.slot(self.parents[0].get()) += back * (inverse ? 1.0 / hw : hw);
                     });
}

}  // namespace

Tensor real_part(const Tensor& z) {
  require_complex(z, "real_part");
  return reshape(slice(z, 0, 1), drop_leading(z.shape()));
}

Tensor imag_part(const Tensor& z) {
  require_complex(z, "imag_part");
  return reshape(slice(z, 1, 2), drop_leading(z.shape()));
}

Tensor complex_mul(const Tensor& a, const Tensor& b) {
  require_complex(a, "complex_mul");
  require_same(a, b, "complex_mul");
  const Tensor ar = real_part(a), ai = imag_part(a), br = real_part(b), bi = imag_part(b);
  Shape one = ar.shape();
  one.insert(one.begin(), 1);
  return concat({reshape(ar * br - ai * bi, one), reshape(ar * bi + ai * br, one)});
}

Tensor complex_abs(const Tensor& z) {
  require_complex(z, "complex_abs");
  const Eigen::Index plane = z.numel() / 2;
  const Array re = z.value().head(plane), im = z.value().tail(plane);
  Array mod = (re.square() + im.square()).sqrt();
  return make_result(drop_leading(z.shape()), std::move(mod), {z},
                     [plane](const Node& self, const Array& g, Gradients& grads) {
                       const Node* p = self.parents[0].get();
                       const Array& m = self.value;
                       const Array safe = (m > 0).select(m, 1.0);
                       const Array scale = (m > 0).select(g / safe, 0.0);
                       Array& s = grads.slot(p);
                       s.head(plane) += scale * p->value.head(plane);
                       s.tail(plane) += scale * p->value.tail(plane);
                     });
}

Tensor fft2(const Tensor& z) { return spectral(z, false); }
Tensor ifft2(const Tensor& z) { return spectral(z, true); }

Tensor bce_with_logits(const Tensor& logits, const Array& targets) {
  if (targets.size() != logits.numel()) throw ShapeError("bce_with_logits: target size");
  const Array& z = logits.value();
  Array out = z.max(0.0) + (-z.abs()).exp().log1p() - targets * z;
  return make_result(logits.shape(), std::move(out), {logits},
                     [targets](const Node& self, const Array& g, Gradients& grads) {
                       const Node* p = self.parents[0].get();
                       const Array prob = (1.0 + (-p->value).exp()).inverse();
                       grads.slot(p) += g * (prob - targets);
                     });
}

Tensor bce_probs(const Tensor& probs, const Tensor& targets) {
  require_same(probs, targets, "bce_probs");
  return -(targets * log(clamp_min(probs, kProbClamp)) + (1.0 - targets) * log(clamp_min(1.0 - probs, kProbClamp)));
}

}  // namespace sodetr
