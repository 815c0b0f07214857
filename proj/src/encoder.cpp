#include "sodetr/encoder.hpp"

namespace sodetr {

void FeaturePyramid::validate() const {
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const Tensor& t = levels[l];
    if (!t.defined() || t.rank() != 3) throw ShapeError("pyramid level " + std::to_string(l) + " must be [C,H,W]");
    if (l == 0) continue;
    const Tensor& prev = levels[l - 1];
    if (t.dim(0) != prev.dim(0)) throw ConfigError("pyramid channel counts differ between levels");
    if (prev.dim(1) != 2 * t.dim(1) || prev.dim(2) != 2 * t.dim(2)) {
      throw ShapeError("pyramid spatial dims must halve between levels: " + to_string(prev.shape()) + " then " +
                       to_string(t.shape()));
    }
  }
}

FusionBlock FusionBlock::make(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
  return {Conv2d::make(store, name + ".reduce", in, out, 1, 1, rng),
          Conv2d::make(store, name + ".conv", out, out, 3, 1, rng)};
}

Tensor FusionBlock::operator()(const Tensor& x) const {
  const Tensor y = gelu(reduce(x));
  return y + gelu(conv(y));
}

Junction Junction::make(ParamStore& store, const std::string& name, int in, int out, bool use_ddf, Rng& rng) {
  Junction j;
  if (use_ddf) {
    j.ddf = DDFParams::make(store, name + ".ddf", in, out, rng);
  } else {
    j.fusion = FusionBlock::make(store, name + ".fusion", in, out, rng);
  }
  return j;
}

Tensor Junction::operator()(const Tensor& x, FreqMode mode, DDFTrace* trace) const {
  if (ddf) return ddf_forward(x, *ddf, mode, trace);
  return (*fusion)(x);
}

std::vector<std::array<double, 2>> grid_positions(int h, int w) {
  std::vector<std::array<double, 2>> out;
  out.reserve(static_cast<std::size_t>(h) * w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) out.push_back({(j + 0.5) / w, (i + 0.5) / h});
  }
  return out;
}

Tensor flatten_tokens(const Tensor& x) {
  return transpose(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}));
}

Tensor unflatten_tokens(const Tensor& tokens, int h, int w) {
  return reshape(transpose(tokens), {tokens.dim(1), h, w});
}

HybridEncoder HybridEncoder::make(ParamStore& store, const std::string& name, const EncoderConfig& cfg, Rng& rng) {
  const int c = cfg.channels;
  if (c <= 0 || c % 4 != 0) throw ConfigError("encoder channels must be a positive multiple of 4");
  if (c % cfg.heads != 0) throw ConfigError("encoder channels must be divisible by heads");
  HybridEncoder e;
  e.cfg_ = cfg;
  e.attn_ = MultiheadAttention::make(store, name + ".aifi.attn", c, cfg.heads, rng);
  e.norm1_ = LayerNorm::make(store, name + ".aifi.norm1", c);
  e.ffn_ = Mlp::make(store, name + ".aifi.ffn", c, 2 * c, c, rng);
  e.norm2_ = LayerNorm::make(store, name + ".aifi.norm2", c);
  e.lat5_ = Conv2d::make(store, name + ".lat5", c, c, 1, 1, rng);
  e.td4_ = Junction::make(store, name + ".td4", 2 * c, c, false, rng);
  e.lat4_ = Conv2d::make(store, name + ".lat4", c, c, 1, 1, rng);
  e.td3_ = Junction::make(store, name + ".td3", 2 * c, c, cfg.use_ddf, rng);
  e.lat3_ = Conv2d::make(store, name + ".lat3", c, c, 1, 1, rng);
  e.td2_ = Junction::make(store, name + ".td2", 2 * c, c, cfg.use_ddf, rng);
  e.down2_ = Conv2d::make(store, name + ".down2", c, c, 3, 2, rng);
  e.bu3_ = Junction::make(store, name + ".bu3", 2 * c, c, cfg.use_ddf, rng);
  e.down3_ = Conv2d::make(store, name + ".down3", c, c, 3, 2, rng);
  e.bu4_ = Junction::make(store, name + ".bu4", 2 * c, c, false, rng);
  e.down4_ = Conv2d::make(store, name + ".down4", c, c, 3, 2, rng);
  e.bu5_ = Junction::make(store, name + ".bu5", 2 * c, c, false, rng);
  return e;
}

const DDFParams* HybridEncoder::ddf(const std::string& junction) const {
  const Junction* j = junction == "td3" ? &td3_ : junction == "td2" ? &td2_ : junction == "bu3" ? &bu3_ : nullptr;
  if (!j) throw ConfigError("unknown DDF junction '" + junction + "'");
  return j->ddf ? &*j->ddf : nullptr;
}

Tensor HybridEncoder::aifi(const Tensor& s5) const {
  const int h = s5.dim(1), w = s5.dim(2);
  const Tensor x = flatten_tokens(s5);
  const Tensor pos(x.shape(), sine_position_encoding(grid_positions(h, w), cfg_.channels).reshaped<Eigen::RowMajor>());
  const Tensor qk = x + pos;
  Tensor y = norm1_(x + attn_.attend(qk, qk, x).output);
  y = norm2_(y + ffn_(y));
  return unflatten_tokens(y, h, w);
}

EncoderMemory HybridEncoder::operator()(const FeaturePyramid& pyr, EncoderTrace* trace) const {
  pyr.validate();
  if (pyr.levels[0].dim(0) != cfg_.channels) {
    throw ConfigError("pyramid has " + std::to_string(pyr.levels[0].dim(0)) + " channels, encoder expects " +
                      std::to_string(cfg_.channels));
  }
  const FreqMode mode = cfg_.freq_mode;
  const auto& [s2, s3, s4, s5] = pyr.levels;

  const Tensor t5 = aifi(s5);
  const Tensor t4 = td4_(concat({upsample_nearest2x(lat5_(t5)), s4}), mode);
  const Tensor t3 = td3_(concat({upsample_nearest2x(lat4_(t4)), s3}), mode);
  const Tensor t2 = td2_(concat({upsample_nearest2x(lat3_(t3)), s2}), mode, trace ? &trace->s2_junction : nullptr);

  const Tensor& n2 = t2;
  const Tensor n3 = bu3_(concat({down2_(n2), t3}), mode);
  const Tensor n4 = bu4_(concat({down3_(n3), t4}), mode);
  const Tensor n5 = bu5_(concat({down4_(n4), t5}), mode);

  EncoderMemory mem;
  std::vector<Tensor> flat;
  int offset = 0;
  for (const Tensor* level : {&n2, &n3, &n4, &n5}) {
    const int h = level->dim(1), w = level->dim(2);
    mem.level_offsets.push_back(offset);
    mem.level_shapes.push_back({h, w});
    const auto pos = grid_positions(h, w);
    mem.positions.insert(mem.positions.end(), pos.begin(), pos.end());
    flat.push_back(flatten_tokens(*level));
    offset += h * w;
  }
  mem.tokens = concat(flat);
  mem.position_encoding = sine_position_encoding(mem.positions, cfg_.channels);
  return mem;
}

}  // namespace sodetr
