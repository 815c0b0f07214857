#pragma once

#include "sodetr/box.hpp"
#include "sodetr/rng.hpp"

#include <vector>

namespace sodetr::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  Array v(numel(shape));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v), requires_grad);
}

inline BoxD random_box(Rng& rng, double min_side = 0.02, double max_side = 0.3) {
  return {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(min_side, max_side),
          rng.uniform(min_side, max_side)};
}

// Naive cross-correlation: out[o,y,x] = b[o] + sum w[o,c,i,j] x[c, y*s+i-p, x*s+j-p].
inline Array naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  const int ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  Array out = Array::Zero(Eigen::Index(cout) * ho * wo);
  for (int o = 0; o < cout; ++o)
    for (int yy = 0; yy < ho; ++yy)
      for (int xx = 0; xx < wo; ++xx) {
        double acc = b.defined() ? b.at(o) : 0.0;
        for (int c = 0; c < cin; ++c)
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
              const int sy = yy * stride + i - pad, sx = xx * stride + j - pad;
              if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
              acc += w.at(((Eigen::Index(o) * cin + c) * k + i) * k + j) * x.at((Eigen::Index(c) * h + sy) * wd + sx);
            }
        out((Eigen::Index(o) * ho + yy) * wo + xx) = acc;
      }
  return out;
}

inline double max_abs_diff(const Array& a, const Array& b) { return (a - b).abs().maxCoeff(); }

}  // namespace sodetr::testing
