#include "sodetr/checkpoint.hpp"
#include "sodetr/gradcheck.hpp"
#include "sodetr/nn.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace sodetr;
using sodetr::testing::max_abs_diff;
using sodetr::testing::naive_conv;
using sodetr::testing::random_tensor;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, Array::Zero(5)), ShapeError);
  EXPECT_THROW(Tensor({0, 3}, Array::Zero(0)), ShapeError);
  const Tensor t({2, 3}, Array::Zero(6));
  EXPECT_EQ(t.numel(), 6);
  EXPECT_EQ(t.dim(-1), 3);
}

TEST(Tensor, BroadcastOnlyFromSingleElement) {
  const Tensor a = Tensor::full({2, 2}, 1.0), b = Tensor::full({3}, 1.0);
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_DOUBLE_EQ((a + Tensor::scalar(2.0)).at(3), 3.0);
}

TEST(Gelu, ExactErfValues) {
  const Tensor x = Tensor::from_vector({3}, {0.0, 10.0, 1.0});
  const Tensor y = gelu(x);
  EXPECT_EQ(y.at(0), 0.0);
  EXPECT_NEAR(y.at(1), 10.0, 1e-6);
  // Phi(1) from erf.
  EXPECT_NEAR(y.at(2), 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0))), 1e-15);
  EXPECT_NEAR(y.at(2), 0.8413447, 1e-7);
}

TEST(Conv2d, OneByOneIdentity) {
  Rng rng(3);
  const Tensor x = random_tensor({4, 5, 6}, rng);
  Array w = Array::Zero(16);
  for (int i = 0; i < 4; ++i) w(i * 4 + i) = 1.0;
  const Tensor y = conv2d(x, Tensor({4, 4, 1, 1}, w), Tensor::zeros({4}), 1, 0);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(max_abs_diff(y.value(), x.value()), 0.0);
}

TEST(Conv2d, CenterStencilIdentity) {
  Rng rng(4);
  const Tensor x = random_tensor({2, 5, 5}, rng);
  Array w = Array::Zero(2 * 2 * 9);
  w(0 * 18 + 0 * 9 + 4) = 1.0;
  w(1 * 18 + 1 * 9 + 4) = 1.0;
  const Tensor y = conv2d(x, Tensor({2, 2, 3, 3}, w), Tensor::zeros({2}), 1, 1);
  EXPECT_EQ(max_abs_diff(y.value(), x.value()), 0.0);
}

TEST(Conv2d, MatchesNaiveLoop) {
  Rng rng(5);
  const Tensor x = random_tensor({2, 5, 5}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng);
  const Tensor b = random_tensor({3}, rng);
  const Tensor y = conv2d(x, w, b, 1, 1);
  EXPECT_EQ(y.shape(), (Shape{3, 5, 5}));
  EXPECT_LT(max_abs_diff(y.value(), naive_conv(x, w, b, 1, 1)), 1e-10);
}

TEST(Conv2d, StrideTwoMatchesNaiveLoop) {
  Rng rng(6);
  const Tensor x = random_tensor({3, 8, 6}, rng);
  const Tensor w = random_tensor({2, 3, 3, 3}, rng);
  const Tensor b = random_tensor({2}, rng);
  const Tensor y = conv2d(x, w, b, 2, 1);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 3}));
  EXPECT_LT(max_abs_diff(y.value(), naive_conv(x, w, b, 2, 1)), 1e-10);
}

TEST(Conv2d, ChannelMismatchThrows) {
  EXPECT_THROW(conv2d(Tensor::zeros({2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor(), 1, 1), ShapeError);
}

TEST(Conv2d, Linearity) {
  Rng rng(7);
  const Tensor x = random_tensor({2, 6, 6}, rng), z = random_tensor({2, 6, 6}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng);
  const Tensor zero = Tensor::zeros({3});
  const double a = 0.7, b = -1.3;
  const Tensor lhs = conv2d(x * a + z * b, w, zero, 1, 1);
  const Tensor rhs = conv2d(x, w, zero, 1, 1) * a + conv2d(z, w, zero, 1, 1) * b;
  EXPECT_LT(max_abs_diff(lhs.value(), rhs.value()), 1e-10);
}

namespace {

RowMatrix mat(const Tensor& t) { return Eigen::Map<const RowMatrix>(t.value().data(), t.dim(0), t.dim(1)); }
Eigen::RowVectorXd vec(const Tensor& t) { return Eigen::Map<const Eigen::RowVectorXd>(t.value().data(), t.numel()); }

// Straight-line attention with the module's weights.
RowMatrix attention_oracle(const MultiheadAttention& m, const RowMatrix& q, const RowMatrix& kv) {
  auto proj = [](const Linear& l, const RowMatrix& x) {
    RowMatrix y = x * mat(l.weight).transpose();
    y.rowwise() += vec(l.bias);
    return y;
  };
  const RowMatrix Q = proj(m.q_proj, q), K = proj(m.k_proj, kv), V = proj(m.v_proj, kv);
  const int d = static_cast<int>(q.cols()), dh = d / m.heads;
  RowMatrix cat(q.rows(), d);
  for (int h = 0; h < m.heads; ++h) {
    RowMatrix s = Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose() / std::sqrt(double(dh));
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const double mx = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - mx).exp().matrix();
      s.row(i) /= s.row(i).sum();
    }
    cat.middleCols(h * dh, dh) = s * V.middleCols(h * dh, dh);
  }
  return proj(m.out_proj, cat);
}

Tensor from_matrix(const RowMatrix& m) {
  return Tensor({int(m.rows()), int(m.cols())}, m.reshaped<Eigen::RowMajor>());
}

}  // namespace

TEST(Attention, MatchesDirectFormula) {
  Rng rng(11);
  ParamStore store;
  const auto m = MultiheadAttention::make(store, "mha", 8, 2, rng);
  const Tensor q = random_tensor({3, 8}, rng), kv = random_tensor({5, 8}, rng);
  const Tensor y = m(q, kv);
  EXPECT_EQ(y.shape(), (Shape{3, 8}));
  EXPECT_LT((mat(y) - attention_oracle(m, mat(q), mat(kv))).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Attention, SingleKeyIgnoresQuery) {
  Rng rng(12);
  ParamStore store;
  const auto m = MultiheadAttention::make(store, "mha", 8, 4, rng);
  const Tensor kv = random_tensor({1, 8}, rng);
  const Tensor y1 = m(random_tensor({2, 8}, rng), kv), y2 = m(random_tensor({2, 8}, rng), kv);
  EXPECT_LT(max_abs_diff(y1.value(), y2.value()), 1e-14);
  const Tensor expect = m.out_proj(m.v_proj(kv));
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 8; ++c) EXPECT_NEAR(y1.at(r * 8 + c), expect.at(c), 1e-14);
}

TEST(Attention, KeyPermutationInvariance) {
  Rng rng(13);
  ParamStore store;
  const auto m = MultiheadAttention::make(store, "mha", 8, 2, rng);
  const Tensor q = random_tensor({3, 8}, rng), kv = random_tensor({5, 8}, rng);
  const Tensor perm = gather_rows(kv, {3, 0, 4, 2, 1});
  EXPECT_LT(max_abs_diff(m(q, kv).value(), m(q, perm).value()), 1e-13);
}

TEST(Attention, HeadsMustDivideDim) {
  Rng rng(14);
  ParamStore store;
  EXPECT_THROW(MultiheadAttention::make(store, "mha", 6, 4, rng), ShapeError);
  const auto m = MultiheadAttention::make(store, "ok", 8, 2, rng);
  EXPECT_THROW(m(Tensor::zeros({2, 8}), Tensor::zeros({2, 6})), ShapeError);
}

TEST(Upsample, ReplicatesBlocks) {
  const Tensor y = upsample_nearest2x(Tensor::full({1, 1, 1}, 7.0));
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2}));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(y.at(i), 7.0);

  Rng rng(15);
  const Tensor x = random_tensor({2, 3, 4}, rng);
  const Tensor u = upsample_nearest2x(x);
  EXPECT_NEAR(u.value().mean(), x.value().mean(), 1e-15);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) EXPECT_EQ(u.at((c * 6 + 2 * i) * 8 + 2 * j), x.at((c * 3 + i) * 4 + j));
}

TEST(GradOf, PowerRule) {
  const Tensor x = Tensor::from_vector({1}, {3.0}, true);
  const Tensor loss = sum(square(x));
  EXPECT_DOUBLE_EQ(grad_of(loss, x).item(), 6.0);
  EXPECT_DOUBLE_EQ(grad_of(loss, x).item(), 6.0);  // idempotent
}

TEST(GradOf, ConstantLossHasZeroGradient) {
  Rng rng(16);
  const Tensor x = random_tensor({4}, rng);
  const Tensor c = x - x;
  const Tensor g = grad_of(sum(c), x);
  EXPECT_EQ(g.value().abs().maxCoeff(), 0.0);
}

TEST(GradOf, UnreachableParameterThrows) {
  const Tensor x = Tensor::full({2}, 1.0, true), y = Tensor::full({2}, 1.0, true);
  EXPECT_THROW(grad_of(sum(x * 2.0), y), GraphError);
  EXPECT_THROW(grad_of(sum(Tensor::full({2}, 1.0)), x), GraphError);
}

TEST(GradOf, GeluMatchesFiniteDifferences) {
  Rng rng(17);
  const Tensor x = random_tensor({4}, rng, -2, 2);
  EXPECT_LT(finite_diff_check([](const Tensor& t) { return sum(gelu(t)); }, x, 1e-5), 1e-4);
}

TEST(FiniteDiff, ExactForLinearAndQuadratic) {
  Rng rng(18);
  // Dyadic inputs and a power-of-two step keep every sum exact.
  for (int trial = 0; trial < 10; ++trial) {
    Array v(5);
    for (auto& e : v) e = rng.uniform_int(-256, 256) / 64.0;
    EXPECT_LE(finite_diff_check([](const Tensor& t) { return sum(t); }, Tensor({5}, v), 0x1.0p-17), 1e-12);
  }
  const Tensor x = Tensor::from_vector({2}, {1.0, 2.0}, true);
  EXPECT_LT(finite_diff_check([](const Tensor& t) { return sum(square(t)); }, x, 1e-5), 1e-9);
}

TEST(NoGrad, GuardStopsRecording) {
  const Tensor x = Tensor::full({2}, 1.0, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE((x * 2.0).requires_grad());
  }
  EXPECT_TRUE((x * 2.0).requires_grad());
}

// Every differentiable op against central differences.
namespace {

struct OpCase {
  const char* name;
  Shape shape;
  double lo, hi;
  std::function<Tensor(const Tensor&)> f;
};

std::vector<OpCase> op_cases() {
  Rng rng(99);
  const Tensor w3 = random_tensor({3, 2, 3, 3}, rng, -1, 1, false);
  const Tensor b3 = random_tensor({3}, rng, -1, 1, false);
  const Tensor other = random_tensor({3, 4}, rng, 0.5, 1.5, false);
  const Tensor rhs = random_tensor({4, 2}, rng, -1, 1, false);
  const Tensor gamma = random_tensor({4}, rng, 0.5, 1.5, false), beta = random_tensor({4}, rng, -1, 1, false);
  const Tensor wl = random_tensor({5, 4}, rng, -1, 1, false), bl = random_tensor({5}, rng, -1, 1, false);
  const Array targets = random_tensor({3, 4}, rng, 0, 1, false).value();
  const Tensor weights = random_tensor({3, 4}, rng, -1, 1, false);
  auto weighted = [weights](const Tensor& y) { return sum(y * weights); };
  return {
      {"add", {3, 4}, -1, 1, [=](const Tensor& x) { return weighted(x + other); }},
      {"sub", {3, 4}, -1, 1, [=](const Tensor& x) { return weighted(other - x); }},
      {"mul", {3, 4}, -1, 1, [=](const Tensor& x) { return weighted(x * other); }},
      {"div", {3, 4}, 0.5, 1.5, [=](const Tensor& x) { return weighted(other / x); }},
      {"rdiv", {3, 4}, 0.5, 1.5, [=](const Tensor& x) { return weighted(2.0 / x); }},
      {"exp", {3, 4}, -1, 1, [=](const Tensor& x) { return weighted(exp(x)); }},
      {"log", {3, 4}, 0.5, 2, [=](const Tensor& x) { return weighted(log(x)); }},
      {"sqrt", {3, 4}, 0.5, 2, [=](const Tensor& x) { return weighted(sqrt(x)); }},
      {"abs", {3, 4}, 0.1, 1, [=](const Tensor& x) { return weighted(abs(x - 0.55)); }},
      {"square", {3, 4}, -1, 1, [=](const Tensor& x) { return weighted(square(x)); }},
      {"pow", {3, 4}, 0.2, 1, [=](const Tensor& x) { return weighted(pow(x, 4.0)); }},
      {"asin", {3, 4}, -0.8, 0.8, [=](const Tensor& x) { return weighted(asin(x)); }},
      {"sin", {3, 4}, -2, 2, [=](const Tensor& x) { return weighted(sin(x)); }},
      {"relu", {3, 4}, 0.1, 1, [=](const Tensor& x) { return weighted(relu(x - 0.55)); }},
      {"gelu", {3, 4}, -2, 2, [=](const Tensor& x) { return weighted(gelu(x)); }},
      {"sigmoid", {3, 4}, -3, 3, [=](const Tensor& x) { return weighted(sigmoid(x)); }},
      {"softplus", {3, 4}, -3, 3, [=](const Tensor& x) { return weighted(softplus(x)); }},
      {"minimum", {3, 4}, -1, 1, [=](const Tensor& x) { return weighted(minimum(x, other - 1.0)); }},
      {"maximum", {3, 4}, -1, 1, [=](const Tensor& x) { return weighted(maximum(x, other - 1.0)); }},
      {"mean", {3, 4}, -1, 1, [=](const Tensor& x) { return mean(square(x)); }},
      {"reshape", {3, 4}, -1, 1, [=](const Tensor& x) { return weighted(reshape(square(x), {3, 4})); }},
      {"transpose", {4, 3}, -1, 1, [=](const Tensor& x) { return weighted(transpose(square(x))); }},
      {"gather_rows", {4, 4}, -1, 1, [=](const Tensor& x) { return weighted(square(gather_rows(x, {3, 1, 1}))); }},
      {"slice_cols", {3, 6}, -1, 1, [=](const Tensor& x) { return weighted(square(slice_cols(x, 1, 4))); }},
      {"concat_cols", {3, 2}, -1, 1, [=](const Tensor& x) { return weighted(concat_cols({x, square(x)})); }},
      {"concat", {1, 4}, -1, 1, [=](const Tensor& x) { return weighted(concat({x, square(x), exp(x)})); }},
      {"slice", {5, 4}, -1, 1, [=](const Tensor& x) { return weighted(square(slice(x, 1, 4))); }},
      {"column", {4, 3}, -1, 1, [=](const Tensor& x) { return sum(square(column(x, 1))); }},
      {"stack_cols", {3}, -1, 1, [=](const Tensor& x) { return weighted(stack_cols({x, square(x), x, exp(x)})); }},
      {"matmul", {3, 4}, -1, 1, [=](const Tensor& x) { return sum(square(matmul(x, rhs))); }},
      {"linear", {3, 4}, -1, 1, [=](const Tensor& x) { return sum(square(linear(x, wl, bl))); }},
      {"softmax_rows", {3, 4}, -1, 1, [=](const Tensor& x) { return weighted(softmax_rows(x)); }},
      {"layer_norm", {3, 4}, -1, 1, [=](const Tensor& x) { return weighted(layer_norm_rows(x, gamma, beta)); }},
      {"conv2d", {2, 5, 4}, -1, 1, [=](const Tensor& x) { return sum(square(conv2d(x, w3, b3, 1, 1))); }},
      {"conv2d_stride2", {2, 6, 6}, -1, 1, [=](const Tensor& x) { return sum(square(conv2d(x, w3, b3, 2, 1))); }},
      {"upsample", {2, 2, 3}, -1, 1, [=](const Tensor& x) { return sum(square(upsample_nearest2x(x)) * 0.3); }},
      {"pad_crop", {2, 3, 3}, -1, 1, [=](const Tensor& x) { return sum(square(crop2d(pad2d(x, 4, 5), 2, 3))); }},
      {"complex", {2, 4, 4}, -1, 1,
       [=](const Tensor& x) {
         const Tensor z = fft2(to_complex(x));
         return sum(square(real_part(z))) * 0.1 + sum(imag_part(z) * 0.2);
       }},
      {"complex_mul_abs", {2, 4, 4}, -1, 1,
       [=](const Tensor& x) { return sum(complex_abs(complex_mul(fft2(to_complex(x)), fft2(to_complex(square(x)))))); }},
      {"ifft2", {2, 4, 4}, -1, 1, [=](const Tensor& x) { return sum(complex_abs(ifft2(to_complex(x) + 0.3))); }},
      {"clamp", {3, 4}, -0.9, 0.9, [=](const Tensor& x) { return weighted(clamp(x * 0.5, -1.0, 1.0)); }},
      {"bce_with_logits", {3, 4}, -3, 3, [=](const Tensor& x) { return sum(bce_with_logits(x, targets)); }},
      {"bce_probs", {3, 4}, 0.05, 0.95,
       [=](const Tensor& x) { return sum(bce_probs(x, Tensor({3, 4}, targets))); }},
  };
}

}  // namespace

TEST(GradCheck, EveryDifferentiableOp) {
  Rng rng(21);
  for (const OpCase& c : op_cases()) {
    const Tensor x = random_tensor(c.shape, rng, c.lo, c.hi);
    EXPECT_LT(finite_diff_check(c.f, x, 1e-5), 1e-4) << c.name;
  }
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    differs = differs || va != c.next_u64();
  }
  EXPECT_TRUE(differs);
  // mt19937_64 reference: the 10000th output for the default seed is fixed by the standard.
  std::mt19937_64 ref;
  ref.discard(9999);
  EXPECT_EQ(ref(), 9981545732273789042ULL);
}

TEST(Rng, UniformIntStaysInRange) {
  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    const int v = r.uniform_int(3, 7);
    EXPECT_GE(v, 3);
    EXPECT_LE(v, 7);
  }
}

TEST(ParamStore, InitializationIsDeterministicAndBounded) {
  Rng r1(9), r2(9);
  ParamStore s1, s2;
  const Tensor a = s1.uniform("w", {4, 9}, 9, r1);
  s2.uniform("w", {4, 9}, 9, r2);
  EXPECT_EQ(s1.checksum(), s2.checksum());
  EXPECT_LE(a.value().abs().maxCoeff(), 1.0 / 3.0);
  EXPECT_THROW(s1.uniform("w", {1}, 1, r1), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(10);
  ParamStore store;
  store.uniform("a.weight", {3, 2, 3, 3}, 18, rng);
  store.constant("a.bias", {3}, -0.25);
  const std::string path = ::testing::TempDir() + "ckpt.bin";
  save_checkpoint(path, store.snapshot());
  const auto loaded = load_checkpoint(path);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0].name, "a.weight");
  EXPECT_EQ(loaded[0].tensor.shape(), (Shape{3, 2, 3, 3}));
  EXPECT_EQ(max_abs_diff(loaded[0].tensor.value(), store.get("a.weight").value()), 0.0);

  ParamStore other;
  Rng rng2(11);
  other.uniform("a.weight", {3, 2, 3, 3}, 18, rng2);
  other.constant("a.bias", {3}, 0.0);
  other.assign(loaded);
  EXPECT_EQ(other.checksum(), store.checksum());

  std::ifstream in(path, std::ios::binary);
  char magic[7];
  in.read(magic, 7);
  EXPECT_EQ(std::string(magic, 7), "SODETR1");
}

TEST(Checkpoint, RejectsBadMagicAndMismatch) {
  const std::string path = ::testing::TempDir() + "bad.bin";
  std::ofstream(path) << "NOTACKPT";
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);

  ParamStore store;
  store.constant("x", {2}, 1.0);
  EXPECT_THROW(store.assign({{"x", Tensor::zeros({3})}}), ShapeError);
  EXPECT_THROW(store.assign({{"y", Tensor::zeros({2})}}), std::invalid_argument);
}

TEST(Optimizer, ZeroLearningRateLeavesParametersBitIdentical) {
  Rng rng(12);
  ParamStore store;
  store.uniform("w", {4, 4}, 4, rng);
  store.uniform("b", {4}, 4, rng);
  const auto before = store.checksum();
  for (auto kind : {OptimizerConfig::Kind::kAdamW, OptimizerConfig::Kind::kSgd}) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    cfg.learning_rate = 0.0;
    Optimizer opt(store, cfg);
    opt.step({Array::Constant(16, 0.3), Array::Constant(4, -2.0)});
  }
  EXPECT_EQ(store.checksum(), before);
}

TEST(Optimizer, ClipsGlobalNorm) {
  ParamStore store;
  const Tensor w = store.constant("w", {2}, 0.0);
  OptimizerConfig cfg;
  cfg.kind = OptimizerConfig::Kind::kSgd;
  cfg.learning_rate = 1.0;
  cfg.weight_decay = 0.0;
  cfg.grad_clip = 1.0;
  Optimizer opt(store, cfg);
  const double norm = opt.step({Array::Constant(2, 3.0)});
  EXPECT_NEAR(norm, std::sqrt(18.0), 1e-12);
  EXPECT_NEAR(w.at(0), -1.0 / std::sqrt(2.0), 1e-12);
}
