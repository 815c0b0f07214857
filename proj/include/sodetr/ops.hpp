#pragma once

#include "sodetr/tensor.hpp"

#include <vector>

namespace sodetr {

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

// Elementwise arithmetic. Shapes must match, except that either side may be
// a single element, which broadcasts.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor rdiv_scalar(double c, const Tensor& x);  // c / x

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator+(double c, const Tensor& a) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }
inline Tensor operator-(double c, const Tensor& a) { return add_scalar(mul_scalar(a, -1.0), c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator/(const Tensor& a, double c) { return mul_scalar(a, 1.0 / c); }
inline Tensor operator/(double c, const Tensor& a) { return rdiv_scalar(c, a); }
inline Tensor operator-(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor abs(const Tensor& x);  // subgradient 0 at 0
Tensor square(const Tensor& x);
Tensor pow(const Tensor& x, double p);  // x >= 0
Tensor asin(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);  // zero gradient outside (lo, hi)
Tensor clamp_min(const Tensor& x, double lo);
Tensor minimum(const Tensor& a, const Tensor& b);  // ties route to a
Tensor maximum(const Tensor& a, const Tensor& b);  // ties route to a
Tensor select(const Mask& mask, const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, const Shape& shape);
Tensor concat(const std::vector<Tensor>& xs);  // along axis 0
Tensor slice(const Tensor& x, int begin, int end);  // along axis 0
Tensor transpose(const Tensor& x);  // rank 2
Tensor gather_rows(const Tensor& x, const std::vector<int>& rows);  // rank 2
Tensor slice_cols(const Tensor& x, int begin, int count);  // rank 2
Tensor concat_cols(const std::vector<Tensor>& xs);  // rank 2
Tensor column(const Tensor& x, int j);  // [N,M] -> [N]
Tensor stack_cols(const std::vector<Tensor>& cols);  // [N] x M -> [N,M]

Tensor matmul(const Tensor& a, const Tensor& b);
/// x[N,in] * w[out,in]^T + b[out]; b may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);

/// Cross-correlation of x[C_in,H,W] with w[C_out,C_in,k,k]. b may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);
Tensor upsample_nearest2x(const Tensor& x);  // [C,H,W] -> [C,2H,2W]
/// Zero-pads the trailing two dims to (h, w) at the bottom/right.
Tensor pad2d(const Tensor& x, int h, int w);
/// Keeps the top-left (h, w) window of the trailing two dims.
Tensor crop2d(const Tensor& x, int h, int w);

// Complex tensors carry a leading axis of size 2: [re; im].
Tensor to_complex(const Tensor& re);
Tensor real_part(const Tensor& z);
Tensor imag_part(const Tensor& z);
Tensor complex_mul(const Tensor& a, const Tensor& b);
/// sqrt(re^2 + im^2); gradient taken as 0 where the modulus is 0.
Tensor complex_abs(const Tensor& z);
/// Unnormalized forward 2D DFT over the trailing two (power-of-two) dims.
Tensor fft2(const Tensor& z);
/// Inverse 2D DFT carrying the 1/(H*W) factor.
Tensor ifft2(const Tensor& z);

/// Elementwise binary cross-entropy from logits against soft targets.
Tensor bce_with_logits(const Tensor& logits, const Array& targets);
/// Elementwise binary cross-entropy on probabilities; both log arguments are
/// clamped below at 1e-7, so p == t in {0, 1} gives exactly 0.
Tensor bce_probs(const Tensor& probs, const Tensor& targets);

inline constexpr double kProbClamp = 1e-7;

}  // namespace sodetr
