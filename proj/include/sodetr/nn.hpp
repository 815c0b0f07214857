#pragma once

#include "sodetr/ops.hpp"
#include "sodetr/rng.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sodetr {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Ordered, named collection of learnable leaves.
class ParamStore {
 public:
  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Tensor uniform(const std::string& name, const Shape& shape, int fan_in, Rng& rng);
  Tensor constant(const std::string& name, const Shape& shape, double value);

  const std::vector<NamedTensor>& params() const { return params_; }
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Eigen::Index total_size() const;

  /// Copies values from a checkpoint; names and shapes must match exactly.
  void assign(const std::vector<NamedTensor>& values);
  /// Deep copy of current values (no shared nodes).
  std::vector<NamedTensor> snapshot() const;
  /// FNV-1a over the raw bytes of every parameter, in order.
  std::uint64_t checksum() const;

 private:
  Tensor add(const std::string& name, Tensor t);
  std::vector<NamedTensor> params_;
  std::map<std::string, std::size_t> index_;
};

struct Conv2d {
  Tensor weight;
  Tensor bias;
  int stride = 1;
  int padding = 0;

  static Conv2d make(ParamStore& store, const std::string& name, int in, int out, int kernel,
                     int stride, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }
};

struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear make(ParamStore& store, const std::string& name, int in, int out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm make(ParamStore& store, const std::string& name, int dim);
  Tensor operator()(const Tensor& x) const { return layer_norm_rows(x, gamma, beta); }
};

struct AttentionResult {
  Tensor output;
  RowMatrix weights;  // head-averaged [Nq, Nk]; filled on request
};

struct MultiheadAttention {
  Linear q_proj, k_proj, v_proj, out_proj;
  int heads = 1;

  static MultiheadAttention make(ParamStore& store, const std::string& name, int dim, int heads,
                                 Rng& rng);
  /// softmax(Q K^T / sqrt(D/heads)) V per head, concatenated, projected.
  AttentionResult attend(const Tensor& query, const Tensor& key, const Tensor& value,
                         bool keep_weights = false) const;
  Tensor operator()(const Tensor& q, const Tensor& kv) const { return attend(q, kv, kv).output; }
};

/// Two-layer perceptron with GELU in between.
struct Mlp {
  Linear fc1, fc2;

  static Mlp make(ParamStore& store, const std::string& name, int in, int hidden, int out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
};

/// [HW, D] sine/cosine encoding of normalized (x, y) positions, D % 4 == 0.
RowMatrix sine_position_encoding(const std::vector<std::array<double, 2>>& xy, int dim);

struct OptimizerConfig {
  enum class Kind { kSgd, kAdamW } kind = Kind::kAdamW;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Gradient step with decoupled weight decay. Biases and norm parameters
/// (rank-1 tensors) are not decayed.
class Optimizer {
 public:
  Optimizer(const ParamStore& store, OptimizerConfig cfg);
  /// Returns the pre-clip global gradient norm.
  double step(const std::vector<Array>& grads);
  const OptimizerConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  OptimizerConfig cfg_;
  std::vector<Array> m_, v_;
  long step_count_ = 0;
};

}  // namespace sodetr
