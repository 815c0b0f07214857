#include "sodetr/ddf.hpp"

#include "sodetr/fft.hpp"

namespace sodetr {

FreqMode parse_freq_mode(const std::string& s) {
  if (s == "gated") return FreqMode::kGated;
  if (s == "literal") return FreqMode::kLiteral;
  throw ConfigError("unknown freq_mode '" + s + "' (expected gated or literal)");
}

std::string to_string(FreqMode m) { return m == FreqMode::kGated ? "gated" : "literal"; }

DDFParams DDFParams::make(ParamStore& store, const std::string& name, int in_channels, int channels, Rng& rng) {
  if (channels <= 0 || channels % 4 != 0) {
    throw ConfigError("DDF channel count must be a positive multiple of 4, got " + std::to_string(channels));
  }
  DDFParams p;
  p.in_channels = in_channels;
  p.channels = channels;
  p.c1 = channels / 4;
  p.split = Conv2d::make(store, name + ".split", in_channels, channels, 1, 1, rng);
  p.mix = Conv2d::make(store, name + ".mix", p.c1, p.c1, 3, 1, rng);
  p.freq_a = Conv2d::make(store, name + ".freq_a", p.c1, p.c1, 3, 1, rng);
  p.freq_b = Conv2d::make(store, name + ".freq_b", p.c1, p.c1, 3, 1, rng);
  p.residual_c = Conv2d::make(store, name + ".residual_c", p.c1, p.c1, 3, 1, rng);
  p.out_d = Conv2d::make(store, name + ".out_d", p.c1, p.c1, 3, 1, rng);
  p.alpha1 = store.constant(name + ".alpha1", {1}, 1.0);
  p.beta1 = store.constant(name + ".beta1", {1}, 0.0);
  p.fuse = Conv2d::make(store, name + ".fuse", channels, channels, 1, 1, rng);
  return p;
}

DDFSplit ddf_split(const Tensor& x, const DDFParams& p) {
  if (p.channels % 4 != 0) throw ConfigError("DDF channel count must be divisible by 4");
  if (x.rank() != 3 || x.dim(0) != p.in_channels) {
    throw ShapeError("DDF expects [" + std::to_string(p.in_channels) + ",H,W] input, got " + to_string(x.shape()));
  }
  const Tensor mixed = p.split(x);
  return {slice(mixed, 0, p.c1), slice(mixed, p.c1, p.channels)};
}

namespace {

struct Padded {
  Tensor z;  // complex [2,C,P,Q]
  int h, w, ph, pw;
};

Padded complex_padded(const Tensor& x) {
  const int h = x.dim(1), w = x.dim(2);
  const int ph = static_cast<int>(next_power_of_two(h)), pw = static_cast<int>(next_power_of_two(w));
  const Tensor padded = (ph == h && pw == w) ? x : pad2d(x, ph, pw);
  return {to_complex(padded), h, w, ph, pw};
}

}  // namespace

Tensor gated_spectrum(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 3) throw ShapeError("frequency pathway needs two equal [C,H,W] maps");
  const Padded pa = complex_padded(a);
  const Padded pb = complex_padded(b);
  const double norm = 1.0 / (double(pa.ph) * pa.pw);
  return complex_mul(fft2(pa.z), fft2(pb.z) * norm);
}

Tensor frequency_pathway(const Tensor& a, const Tensor& b, FreqMode mode) {
  if (a.shape() != b.shape() || a.rank() != 3) throw ShapeError("frequency pathway needs two equal [C,H,W] maps");
  const int h = a.dim(1), w = a.dim(2);
  if (mode == FreqMode::kLiteral) {
    const Padded pa = complex_padded(a);
    const Tensor round_trip = crop2d(ifft2(fft2(pa.z)), h, w);
    return complex_abs(complex_mul(round_trip, to_complex(b)));
  }
  return complex_abs(crop2d(ifft2(gated_spectrum(a, b)), h, w));
}

Tensor ddf_forward(const Tensor& x, const DDFParams& p, FreqMode mode, DDFTrace* trace) {
  if (x.rank() != 3 || x.dim(1) < 2 || x.dim(2) < 2) {
    throw ShapeError("DDF needs [C,H,W] input with H,W >= 2, got " + to_string(x.shape()));
  }
  const auto [x1, x2] = ddf_split(x, p);
  const Tensor x_conv = gelu(p.mix(x1));
  const Tensor x_conv_abs = abs(x_conv);
  const Tensor freq = frequency_pathway(p.freq_a(x_conv_abs), p.freq_b(x_conv_abs), mode);
  const Tensor spatial = p.out_d(relu(x1 + p.residual_c(x_conv) + p.beta1 * x_conv_abs));
  const Tensor x_out = p.alpha1 * freq + spatial;
  if (trace) *trace = {x_conv_abs, freq, x_out};
  return p.fuse(concat({x_out, x2}));
}

}  // namespace sodetr
