#pragma once

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace sodetr {

template <typename Scalar>
using GridT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Grid = GridT<double>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Split-storage complex grid.
template <typename Scalar>
struct ComplexGridT {
  GridT<Scalar> re;
  GridT<Scalar> im;

  Eigen::Index height() const { return re.rows(); }
  Eigen::Index width() const { return re.cols(); }
};
using ComplexGrid = ComplexGridT<double>;

enum class PadPolicy { kRequirePowerOfTwo, kZeroPad };

constexpr bool is_power_of_two(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

constexpr Eigen::Index next_power_of_two(Eigen::Index n) {
  Eigen::Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {

/// In-place iterative radix-2 DFT over n points spaced by stride.
/// Unnormalized in both directions; inverse flips the twiddle sign.
template <typename Scalar>
void fft1d(std::complex<Scalar>* data, Eigen::Index n, Eigen::Index stride, bool inverse,
           const std::vector<std::complex<Scalar>>& twiddles) {
  for (Eigen::Index i = 1, j = 0; i < n; ++i) {
    Eigen::Index bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i * stride], data[j * stride]);
  }
  for (Eigen::Index len = 2; len <= n; len <<= 1) {
    const Eigen::Index half = len / 2;
    const Eigen::Index step = n / len;
    for (Eigen::Index start = 0; start < n; start += len) {
      for (Eigen::Index k = 0; k < half; ++k) {
        std::complex<Scalar> w = twiddles[k * step];
        if (inverse) w = std::conj(w);
        std::complex<Scalar>& a = data[(start + k) * stride];
        std::complex<Scalar>& b = data[(start + k + half) * stride];
        const std::complex<Scalar> t = w * b;
        b = a - t;
        a = a + t;
      }
    }
  }
}

template <typename Scalar>
std::vector<std::complex<Scalar>> twiddle_table(Eigen::Index n) {
  std::vector<std::complex<Scalar>> w(static_cast<std::size_t>(std::max<Eigen::Index>(n / 2, 1)));
  for (Eigen::Index k = 0; k < n / 2; ++k) {
    const Scalar angle = -Scalar(2) * std::numbers::pi_v<Scalar> * Scalar(k) / Scalar(n);
    w[static_cast<std::size_t>(k)] = {std::cos(angle), std::sin(angle)};
  }
  return w;
}

/// 2D transform of a row-major h x w complex buffer.
template <typename Scalar>
void fft2_inplace(std::complex<Scalar>* data, Eigen::Index h, Eigen::Index w, bool inverse) {
  if (!is_power_of_two(h) || !is_power_of_two(w)) {
    throw DimensionError("fft2 needs power-of-two dims, got " + std::to_string(h) + "x" +
                         std::to_string(w));
  }
  const auto tw_row = twiddle_table<Scalar>(w);
  for (Eigen::Index r = 0; r < h; ++r) fft1d(data + r * w, w, 1, inverse, tw_row);
  const auto tw_col = h == w ? tw_row : twiddle_table<Scalar>(h);
  for (Eigen::Index c = 0; c < w; ++c) fft1d(data + c, h, w, inverse, tw_col);
  if (inverse) {
    const Scalar scale = Scalar(1) / Scalar(h * w);
    for (Eigen::Index i = 0; i < h * w; ++i) data[i] *= scale;
  }
}

template <typename Scalar>
ComplexGridT<Scalar> transform(const GridT<Scalar>& re, const GridT<Scalar>& im, bool inverse) {
  const Eigen::Index h = re.rows(), w = re.cols();
  std::vector<std::complex<Scalar>> buf(static_cast<std::size_t>(h * w));
  for (Eigen::Index i = 0; i < h * w; ++i) buf[i] = {re.data()[i], im.data()[i]};
  fft2_inplace(buf.data(), h, w, inverse);
  ComplexGridT<Scalar> out{GridT<Scalar>(h, w), GridT<Scalar>(h, w)};
  for (Eigen::Index i = 0; i < h * w; ++i) {
    out.re.data()[i] = buf[i].real();
    out.im.data()[i] = buf[i].imag();
  }
  return out;
}

}  // namespace detail

/// Zero-pads to the next power of two in each dim (bottom/right).
template <typename Scalar>
GridT<Scalar> pad_to_power_of_two(const GridT<Scalar>& x) {
  GridT<Scalar> out = GridT<Scalar>::Zero(next_power_of_two(x.rows()), next_power_of_two(x.cols()));
  out.topLeftCorner(x.rows(), x.cols()) = x;
  return out;
}

/// Unnormalized forward 2D DFT of a real grid.
template <typename Scalar>
ComplexGridT<Scalar> fft2(const GridT<Scalar>& x,
                          PadPolicy policy = PadPolicy::kRequirePowerOfTwo) {
  if (policy == PadPolicy::kZeroPad) {
    const GridT<Scalar> p = pad_to_power_of_two(x);
    return detail::transform<Scalar>(p, GridT<Scalar>::Zero(p.rows(), p.cols()), false);
  }
  return detail::transform<Scalar>(x, GridT<Scalar>::Zero(x.rows(), x.cols()), false);
}

template <typename Scalar>
ComplexGridT<Scalar> fft2(const ComplexGridT<Scalar>& z) {
  return detail::transform<Scalar>(z.re, z.im, false);
}

/// Inverse 2D DFT including the 1/(H*W) factor.
template <typename Scalar>
ComplexGridT<Scalar> ifft2(const ComplexGridT<Scalar>& z) {
  return detail::transform<Scalar>(z.re, z.im, true);
}

/// Elementwise modulus.
template <typename Scalar>
GridT<Scalar> magnitude(const ComplexGridT<Scalar>& z) {
  return (z.re.array().square() + z.im.array().square()).sqrt().matrix();
}

}  // namespace sodetr
