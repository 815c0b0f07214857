#pragma once

#include "sodetr/nn.hpp"

#include <stdexcept>
#include <string>

namespace sodetr {

/// How the frequency pathway treats its two convolved magnitude maps.
///   kLiteral: |IFFT(FFT(A)) * B|, the transform pair taken at face value
///             (it reduces to |A * B| up to roundoff).
///   kGated:   |IFFT(FFT(A) . FFT(B) / (P*Q))|, the product taken in the
///             frequency domain over the P x Q zero-padded grid.
enum class FreqMode { kLiteral, kGated };

FreqMode parse_freq_mode(const std::string& s);
std::string to_string(FreqMode m);

/// Parameters of one dual-domain fusion block.
///
/// The input is mixed to `channels` by a 1x1 conv and split into a quarter
/// (branch 1) and the rest (branch 2). Branch 1 runs
///   X_conv = GELU(mix(X1))
///   X_out  = alpha1 * F(freq_a(|X_conv|), freq_b(|X_conv|))
///          + out_d(ReLU(X1 + residual_c(X_conv) + beta1 * |X_conv|))
/// where F is the frequency pathway; the block returns fuse([X_out, X2]).
struct DDFParams {
  Conv2d split;       // 1x1, in -> channels
  Conv2d mix;         // 3x3, c1 -> c1
  Conv2d freq_a;      // 3x3, c1 -> c1
  Conv2d freq_b;      // 3x3, c1 -> c1
  Conv2d residual_c;  // 3x3, c1 -> c1
  Conv2d out_d;       // 3x3, c1 -> c1
  Tensor alpha1;      // [1], init 1
  Tensor beta1;       // [1], init 0
  Conv2d fuse;        // 1x1, channels -> channels
  int in_channels = 0;
  int channels = 0;
  int c1 = 0;

  static DDFParams make(ParamStore& store, const std::string& name, int in_channels, int channels, Rng& rng);
};

struct DDFSplit {
  Tensor x1;  // [C/4, H, W]
  Tensor x2;  // [3C/4, H, W]
};

/// Intermediate maps of one forward pass, for inspection.
struct DDFTrace {
  Tensor x_conv_abs;
  Tensor frequency;  // frequency pathway output before alpha1
  Tensor x_out;
};

DDFSplit ddf_split(const Tensor& x, const DDFParams& p);

/// Frequency pathway on two [C,H,W] maps. Non-power-of-two maps are
/// zero-padded before the transform and cropped after the inverse.
Tensor frequency_pathway(const Tensor& a, const Tensor& b, FreqMode mode);

/// The complex product FFT(a) . FFT(b) / (P*Q) over the padded grid, as a
/// complex tensor [2,C,P,Q]; the quantity the gated mode inverts.
Tensor gated_spectrum(const Tensor& a, const Tensor& b);

Tensor ddf_forward(const Tensor& x, const DDFParams& p, FreqMode mode, DDFTrace* trace = nullptr);

}  // namespace sodetr
