#include "sodetr/nn.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

namespace sodetr {

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_[name] = params_.size();
  params_.push_back({name, t});
  return t;
}

Tensor ParamStore::uniform(const std::string& name, const Shape& shape, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Array v(numel(shape));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-bound, bound);
  return add(name, Tensor(shape, std::move(v), true));
}

Tensor ParamStore::constant(const std::string& name, const Shape& shape, double value) {
  return add(name, Tensor::full(shape, value, true));
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second].tensor;
}

Eigen::Index ParamStore::total_size() const {
  Eigen::Index n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParamStore::assign(const std::vector<NamedTensor>& values) {
  if (values.size() != params_.size()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(values.size()) +
                                " tensors, model expects " + std::to_string(params_.size()));
  }
  for (const auto& nv : values) {
    auto it = index_.find(nv.name);
    if (it == index_.end()) throw std::invalid_argument("checkpoint tensor not in model: " + nv.name);
    Tensor& dst = params_[it->second].tensor;
    if (dst.shape() != nv.tensor.shape()) {
      throw ShapeError("checkpoint shape mismatch for " + nv.name + ": " + to_string(nv.tensor.shape()) +
                       " vs " + to_string(dst.shape()));
    }
    dst.mutable_value() = nv.tensor.value();
  }
}

std::vector<NamedTensor> ParamStore::snapshot() const {
  std::vector<NamedTensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back({p.name, Tensor(p.tensor.shape(), p.tensor.value())});
  return out;
}

std::uint64_t ParamStore::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.tensor.value().data());
    for (Eigen::Index i = 0; i < p.tensor.numel() * Eigen::Index(sizeof(double)); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

Conv2d Conv2d::make(ParamStore& store, const std::string& name, int in, int out, int kernel,
                    int stride, Rng& rng) {
  const int fan_in = in * kernel * kernel;
  Conv2d c;
  c.weight = store.uniform(name + ".weight", {out, in, kernel, kernel}, fan_in, rng);
  c.bias = store.uniform(name + ".bias", {out}, fan_in, rng);
  c.stride = stride;
  c.padding = (kernel - 1) / 2;
  return c;
}

Linear Linear::make(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
  Linear l;
  l.weight = store.uniform(name + ".weight", {out, in}, in, rng);
  l.bias = store.uniform(name + ".bias", {out}, in, rng);
  return l;
}

LayerNorm LayerNorm::make(ParamStore& store, const std::string& name, int dim) {
  return {store.constant(name + ".gamma", {dim}, 1.0), store.constant(name + ".beta", {dim}, 0.0)};
}

MultiheadAttention MultiheadAttention::make(ParamStore& store, const std::string& name, int dim,
                                            int heads, Rng& rng) {
  if (heads <= 0 || dim % heads != 0) {
    throw ShapeError("attention dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) + " heads");
  }
  MultiheadAttention m;
  m.q_proj = Linear::make(store, name + ".q", dim, dim, rng);
  m.k_proj = Linear::make(store, name + ".k", dim, dim, rng);
  m.v_proj = Linear::make(store, name + ".v", dim, dim, rng);
  m.out_proj = Linear::make(store, name + ".out", dim, dim, rng);
  m.heads = heads;
  return m;
}

AttentionResult MultiheadAttention::attend(const Tensor& query, const Tensor& key, const Tensor& value,
                                           bool keep_weights) const {
  if (query.rank() != 2 || key.rank() != 2 || value.rank() != 2) throw ShapeError("attention inputs must be rank 2");
  const int d = q_proj.weight.dim(1);
  if (query.dim(1) != d || key.dim(1) != d || value.dim(1) != d) {
    throw ShapeError("attention feature dim mismatch: expected " + std::to_string(d));
  }
  if (key.dim(0) != value.dim(0)) throw ShapeError("attention key/value length mismatch");
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor q = q_proj(query), k = k_proj(key), v = v_proj(value);
  std::vector<Tensor> outs;
  AttentionResult result;
  if (keep_weights) result.weights = RowMatrix::Zero(query.dim(0), key.dim(0));
  for (int h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * dh, dh);
    const Tensor kh = slice_cols(k, h * dh, dh);
    const Tensor vh = slice_cols(v, h * dh, dh);
    const Tensor attn = softmax_rows(matmul(qh, transpose(kh)) * scale);
    if (keep_weights) {
      result.weights += Eigen::Map<const RowMatrix>(attn.value().data(), query.dim(0), key.dim(0)) / heads;
    }
    outs.push_back(matmul(attn, vh));
  }
  result.output = out_proj(heads == 1 ? outs[0] : concat_cols(outs));
  return result;
}

Mlp Mlp::make(ParamStore& store, const std::string& name, int in, int hidden, int out, Rng& rng) {
  return {Linear::make(store, name + ".fc1", in, hidden, rng), Linear::make(store, name + ".fc2", hidden, out, rng)};
}

RowMatrix sine_position_encoding(const std::vector<std::array<double, 2>>& xy, int dim) {
  if (dim % 4 != 0) throw ShapeError("position encoding dim must be divisible by 4");
  const int nf = dim / 4;
  RowMatrix pe(static_cast<Eigen::Index>(xy.size()), dim);
  for (std::size_t i = 0; i < xy.size(); ++i) {
    for (int f = 0; f < nf; ++f) {
      // Geometric ladder from 1 to 16 cycles per image side.
      const double cycles = nf == 1 ? 1.0 : std::pow(16.0, double(f) / double(nf - 1));
      const double w = 2.0 * std::numbers::pi * cycles;
      for (int axis = 0; axis < 2; ++axis) {
        const int base = axis * (dim / 2);
        pe(i, base + f) = std::sin(w * xy[i][axis]);
        pe(i, base + nf + f) = std::cos(w * xy[i][axis]);
      }
    }
  }
  return pe;
}

Optimizer::Optimizer(const ParamStore& store, OptimizerConfig cfg) : cfg_(cfg) {
  for (const auto& p : store.params()) {
    params_.push_back(p.tensor);
    m_.push_back(Array::Zero(p.tensor.numel()));
    v_.push_back(Array::Zero(p.tensor.numel()));
  }
}

double Optimizer::step(const std::vector<Array>& grads) {
  if (grads.size() != params_.size()) throw std::invalid_argument("gradient count mismatch");
  double sq = 0.0;
  for (const Array& g : grads) sq += g.square().sum();
  const double norm = std::sqrt(sq);
  const double clip = (cfg_.grad_clip > 0 && norm > cfg_.grad_clip) ? cfg_.grad_clip / norm : 1.0;
  ++step_count_;
  const double lr = cfg_.learning_rate;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_count_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Array& w = params_[i].mutable_value();
    const Array g = grads[i] * clip;
    if (params_[i].rank() > 1 && cfg_.weight_decay > 0) w *= (1.0 - lr * cfg_.weight_decay);
    if (cfg_.kind == OptimizerConfig::Kind::kSgd) {
      w -= lr * g;
    } else {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.square();
      w -= lr * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + cfg_.eps);
    }
  }
  return norm;
}

}  // namespace sodetr
