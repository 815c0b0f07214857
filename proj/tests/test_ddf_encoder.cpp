#include "sodetr/encoder.hpp"
#include "sodetr/fft.hpp"
#include "sodetr/gradcheck.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

using namespace sodetr;
using sodetr::testing::ddf_oracle;
using sodetr::testing::max_abs_diff;
using sodetr::testing::naive_conv;
using sodetr::testing::random_tensor;

namespace {

struct Fixture {
  ParamStore store;
  DDFParams p;
  Fixture(int in, int c, std::uint64_t seed) {
    Rng rng(seed);
    p = DDFParams::make(store, "ddf", in, c, rng);
  }
};

void zero_weight(const Conv2d& c) {
  Tensor w = c.weight;
  w.mutable_value().setZero();
  Tensor b = c.bias;
  b.mutable_value().setZero();
}

FeaturePyramid random_pyramid(int c, int s2, Rng& rng) {
  FeaturePyramid pyr;
  for (int l = 0; l < 4; ++l) pyr.levels[l] = random_tensor({c, s2 >> l, s2 >> l}, rng, -1, 1, false);
  return pyr;
}

}  // namespace

TEST(DdfSplit, Shapes) {
  Fixture f(8, 8, 1);
  const auto [x1, x2] = ddf_split(Tensor::zeros({8, 5, 3}), f.p);
  EXPECT_EQ(x1.shape(), (Shape{2, 5, 3}));
  EXPECT_EQ(x2.shape(), (Shape{6, 5, 3}));
  EXPECT_EQ(f.p.c1 + (f.p.channels - f.p.c1), f.p.channels);
}

TEST(DdfSplit, IdentityMixingReproducesInput) {
  Fixture f(8, 8, 2);
  Tensor w = f.p.split.weight;
  w.mutable_value().setZero();
  for (int i = 0; i < 8; ++i) w.mutable_value()(i * 8 + i) = 1.0;
  Tensor(f.p.split.bias).mutable_value().setZero();
  Rng rng(3);
  const Tensor x = random_tensor({8, 4, 4}, rng);
  const auto [x1, x2] = ddf_split(x, f.p);
  EXPECT_EQ(max_abs_diff(concat({x1, x2}).value(), x.value()), 0.0);
}

TEST(DdfSplit, MatchesConvThenSlice) {
  Fixture f(12, 8, 4);
  Rng rng(5);
  const Tensor x = random_tensor({12, 4, 6}, rng);
  const auto [x1, x2] = ddf_split(x, f.p);
  const Array ref = naive_conv(x, f.p.split.weight, f.p.split.bias, 1, 0);
  EXPECT_LT(max_abs_diff(x1.value(), ref.head(2 * 24)), 1e-12);
  EXPECT_LT(max_abs_diff(x2.value(), ref.tail(6 * 24)), 1e-12);
}

TEST(DdfParams, ChannelsMustDivideByFour) {
  ParamStore store;
  Rng rng(6);
  EXPECT_THROW(DDFParams::make(store, "bad", 8, 6, rng), ConfigError);
  Fixture f(8, 8, 7);
  EXPECT_THROW(ddf_split(Tensor::zeros({6, 4, 4}), f.p), ShapeError);
  EXPECT_THROW(ddf_forward(Tensor::zeros({8, 1, 4}), f.p, FreqMode::kGated), ShapeError);
}

TEST(DdfParams, ScalarsAndInitialization) {
  Fixture f(8, 8, 8);
  EXPECT_EQ(f.p.alpha1.numel(), 1);
  EXPECT_EQ(f.p.beta1.numel(), 1);
  EXPECT_EQ(f.p.alpha1.item(), 1.0);
  EXPECT_EQ(f.p.beta1.item(), 0.0);
  EXPECT_EQ(f.p.c1, 2);
  EXPECT_EQ(parse_freq_mode("gated"), FreqMode::kGated);
  EXPECT_EQ(parse_freq_mode("literal"), FreqMode::kLiteral);
  EXPECT_THROW(parse_freq_mode("spectral"), ConfigError);
}

TEST(DdfForward, ShapePreservedForManySizes) {
  Rng rng(9);
  for (auto [c, h, w] : {std::tuple{4, 2, 2}, std::tuple{8, 5, 7}, std::tuple{16, 8, 8}, std::tuple{12, 3, 6}}) {
    Fixture f(c, c, 10);
    for (FreqMode m : {FreqMode::kGated, FreqMode::kLiteral}) {
      const Tensor x = random_tensor({c, h, w}, rng);
      EXPECT_EQ(ddf_forward(x, f.p, m).shape(), x.shape());
    }
  }
}

TEST(DdfForward, GatedMatchesScriptedOracle) {
  Fixture f(8, 8, 11);
  Tensor(f.p.beta1).mutable_value()(0) = 0.3;  // exercise the residual term
  Rng rng(12);
  const Tensor x = random_tensor({8, 8, 8}, rng);
  EXPECT_LT(max_abs_diff(ddf_forward(x, f.p, FreqMode::kGated).value(), ddf_oracle(x, f.p, FreqMode::kGated)), 1e-9);
}

TEST(DdfForward, LiteralEqualsGraphWithoutTransforms) {
  Fixture f(8, 8, 13);
  Rng rng(14);
  for (int h : {8, 6}) {
    const Tensor x = random_tensor({8, h, 8}, rng);
    EXPECT_LT(max_abs_diff(ddf_forward(x, f.p, FreqMode::kLiteral).value(), ddf_oracle(x, f.p, FreqMode::kLiteral)),
              1e-9);
  }
}

TEST(DdfForward, ZeroAlphaRemovesFrequencyTerm) {
  Fixture f(8, 8, 15);
  Tensor(f.p.alpha1).mutable_value()(0) = 0.0;
  Rng rng(16);
  const Tensor x = random_tensor({8, 6, 6}, rng);
  const Tensor before = ddf_forward(x, f.p, FreqMode::kGated);
  for (const Conv2d* c : {&f.p.freq_a, &f.p.freq_b}) {
    Tensor w = c->weight;
    w.mutable_value() += 0.5;
  }
  EXPECT_EQ(max_abs_diff(ddf_forward(x, f.p, FreqMode::kGated).value(), before.value()), 0.0);
}

TEST(DdfForward, SpatialTermReducesWithoutResidual) {
  Fixture f(8, 8, 17);
  zero_weight(f.p.residual_c);
  Rng rng(18);
  const Tensor x = random_tensor({8, 6, 6}, rng);
  DDFTrace trace;
  ddf_forward(x, f.p, FreqMode::kGated, &trace);
  const Tensor spatial = trace.x_out - f.p.alpha1 * trace.frequency;
  const Tensor expect = f.p.out_d(relu(ddf_split(x, f.p).x1));
  EXPECT_LT(max_abs_diff(spatial.value(), expect.value()), 1e-12);
}

TEST(GatedSpectrum, SinusoidSelectsItsFrequencyBin) {
  const int n = 8, u0 = 2, v0 = 3;
  Rng rng(19);
  const Tensor a = random_tensor({1, n, n}, rng, -1, 1, false);
  Array s(n * n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) s(y * n + x) = std::cos(2 * std::numbers::pi * (double(u0) * y + double(v0) * x) / n);
  const Tensor z = gated_spectrum(a, Tensor({1, n, n}, s));

  Grid ag(n, n);
  for (int i = 0; i < n * n; ++i) ag.data()[i] = a.at(i);
  const ComplexGrid fa = fft2(ag);
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) {
      const double re = z.at(u * n + v), im = z.at(n * n + u * n + v);
      const bool hit = (u == u0 && v == v0) || (u == n - u0 && v == n - v0);
      if (hit) {
        // FFT of the cosine puts n^2/2 in each of the two bins.
        EXPECT_NEAR(re, fa.re(u, v) * 0.5, 1e-12);
        EXPECT_NEAR(im, fa.im(u, v) * 0.5, 1e-12);
      } else {
        EXPECT_LT(std::hypot(re, im), 1e-12) << u << "," << v;
      }
    }
}

TEST(DdfGrad, EveryParameterGetsFiniteGradient) {
  for (FreqMode mode : {FreqMode::kGated, FreqMode::kLiteral}) {
    Fixture f(8, 8, 20);
    Rng rng(21);
    const Tensor x = random_tensor({8, 6, 5}, rng, -1, 1, false);
    const Tensor weights = random_tensor({8, 6, 5}, rng, -1, 1, false);
    auto loss = [&] { return sum(ddf_forward(x, f.p, mode) * weights); };
    const Gradients g = backward(loss());
    for (const auto& [name, t] : f.store.params()) {
      const Array* slot = g.find(t.node());
      ASSERT_NE(slot, nullptr) << name;
      EXPECT_TRUE(slot->allFinite()) << name;
      EXPECT_LT(finite_diff_check(loss, t, 1e-6), 1e-4) << name << " " << to_string(mode);
    }
  }
}

TEST(DdfGrad, InputGradientMatchesFiniteDifferences) {
  Fixture f(8, 8, 22);
  Rng rng(23);
  const Tensor x = random_tensor({8, 8, 8}, rng);
  EXPECT_LT(finite_diff_check([&](const Tensor& t) { return sum(ddf_forward(t, f.p, FreqMode::kGated)); }, x, 1e-5),
            1e-4);
}

TEST(Encoder, MemoryLayoutFor96) {
  ParamStore store;
  Rng rng(30);
  const HybridEncoder enc = HybridEncoder::make(store, "encoder", {}, rng);
  const EncoderMemory mem = enc(random_pyramid(32, 24, rng));
  EXPECT_EQ(mem.size(), 765);
  EXPECT_EQ(mem.tokens.shape(), (Shape{765, 32}));
  EXPECT_EQ(mem.level_offsets, (std::vector<int>{0, 576, 720, 756}));
  EXPECT_EQ(mem.positions.size(), 765u);
  EXPECT_EQ(mem.position_encoding.rows(), 765);
  for (std::size_t l = 1; l < mem.level_offsets.size(); ++l) {
    const auto [h, w] = mem.level_shapes[l - 1];
    EXPECT_EQ(mem.level_offsets[l] - mem.level_offsets[l - 1], h * w);
  }
  EXPECT_NE(enc.ddf("td3"), nullptr);
  EXPECT_NE(enc.ddf("td2"), nullptr);
  EXPECT_NE(enc.ddf("bu3"), nullptr);
  EXPECT_THROW(enc.ddf("td4"), ConfigError);
}

TEST(Encoder, TokenCountsForOtherSizes) {
  ParamStore store;
  Rng rng(31);
  EncoderConfig cfg;
  cfg.channels = 8;
  cfg.heads = 2;
  const HybridEncoder enc = HybridEncoder::make(store, "encoder", cfg, rng);
  for (int s2 : {8, 16, 32}) {
    const EncoderMemory mem = enc(random_pyramid(8, s2, rng));
    int n = 0;
    for (int l = 0; l < 4; ++l) n += (s2 >> l) * (s2 >> l);
    EXPECT_EQ(mem.size(), n);
  }
}

TEST(Encoder, ValidatesPyramid) {
  ParamStore store;
  Rng rng(32);
  EncoderConfig cfg;
  cfg.channels = 8;
  cfg.heads = 2;
  const HybridEncoder enc = HybridEncoder::make(store, "encoder", cfg, rng);
  EXPECT_THROW(enc(random_pyramid(16, 16, rng)), ConfigError);
  FeaturePyramid bad = random_pyramid(8, 16, rng);
  bad.levels[2] = Tensor::zeros({8, 3, 4});
  EXPECT_THROW(enc(bad), ShapeError);
}

TEST(Encoder, ZeroWeightsGiveBiasConstantField) {
  ParamStore store;
  Rng rng(33);
  EncoderConfig cfg;
  cfg.channels = 8;
  cfg.heads = 2;
  const HybridEncoder enc = HybridEncoder::make(store, "encoder", cfg, rng);
  const EncoderMemory random_mem = enc(random_pyramid(8, 16, rng));
  for (const auto& [name, t] : store.params()) {
    Tensor w = t;
    if (t.rank() >= 2) w.mutable_value().setZero();
  }
  FeaturePyramid zero;
  for (int l = 0; l < 4; ++l) zero.levels[l] = Tensor::zeros({8, 16 >> l, 16 >> l});
  const EncoderMemory mem = enc(zero);
  EXPECT_EQ((mem.position_encoding - random_mem.position_encoding).cwiseAbs().maxCoeff(), 0.0);

  const RowMatrix tok = Eigen::Map<const RowMatrix>(mem.tokens.value().data(), mem.size(), 8);
  // S2 and S3 come straight out of a DDF fuse conv, so they equal its bias.
  const Array& fuse2 = enc.ddf("td2")->fuse.bias.value();
  const Array& fuse3 = enc.ddf("bu3")->fuse.bias.value();
  for (int i = 0; i < 256; ++i) EXPECT_LT((tok.row(i).transpose().array() - fuse2).abs().maxCoeff(), 1e-15);
  for (int i = 256; i < 320; ++i) EXPECT_LT((tok.row(i).transpose().array() - fuse3).abs().maxCoeff(), 1e-15);
  for (int l = 2; l < 4; ++l) {
    const int begin = mem.level_offsets[l], end = l == 3 ? mem.size() : mem.level_offsets[l + 1];
    for (int i = begin; i < end; ++i) EXPECT_LT((tok.row(i) - tok.row(begin)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Encoder, AblationReplacesDdfJunctions) {
  ParamStore with, without;
  Rng r1(34), r2(34);
  EncoderConfig cfg;
  cfg.channels = 8;
  cfg.heads = 2;
  HybridEncoder::make(with, "encoder", cfg, r1);
  cfg.use_ddf = false;
  const HybridEncoder plain = HybridEncoder::make(without, "encoder", cfg, r2);
  EXPECT_TRUE(with.contains("encoder.td3.ddf.alpha1"));
  EXPECT_FALSE(without.contains("encoder.td3.ddf.alpha1"));
  EXPECT_TRUE(without.contains("encoder.td3.fusion.reduce.weight"));
  EXPECT_EQ(plain.ddf("td2"), nullptr);
  Rng rng(35);
  EXPECT_EQ(plain(random_pyramid(8, 8, rng)).size(), 85);
}

TEST(Encoder, AlphaOfS3JunctionGradient) {
  ParamStore store;
  Rng rng(36);
  const HybridEncoder enc = HybridEncoder::make(store, "encoder", {}, rng);
  const FeaturePyramid pyr = random_pyramid(32, 24, rng);
  const Tensor alpha = store.get("encoder.td3.ddf.alpha1");
  EXPECT_LT(finite_diff_check([&] { return sum(enc(pyr).tokens); }, alpha, 1e-6), 1e-4);
}

TEST(Encoder, DeterministicAcrossRuns) {
  auto run = [] {
    ParamStore store;
    Rng rng(37);
    EncoderConfig cfg;
    cfg.channels = 8;
    cfg.heads = 2;
    const HybridEncoder enc = HybridEncoder::make(store, "encoder", cfg, rng);
    return enc(random_pyramid(8, 8, rng)).tokens.value();
  };
  const Array a = run(), b = run();
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()), 0);
}
