#pragma once

#include "sodetr/ddf.hpp"

#include <array>
#include <optional>
#include <vector>

namespace sodetr {

/// Backbone maps S2..S5 (strides 4, 8, 16, 32), each [C, H_l, W_l].
struct FeaturePyramid {
  std::array<Tensor, 4> levels;

  /// Throws ShapeError unless channels agree and spatial dims halve exactly.
  void validate() const;
};

struct EncoderMemory {
  Tensor tokens;                                  // [N, C], levels S2..S5 row-major
  std::vector<int> level_offsets;                 // start row of each level
  std::vector<std::array<int, 2>> level_shapes;   // (H, W) per level
  std::vector<std::array<double, 2>> positions;   // normalized (cx, cy) per token
  RowMatrix position_encoding;                    // [N, C] sine encoding of positions

  int size() const { return tokens.defined() ? tokens.dim(0) : 0; }
};

struct EncoderConfig {
  int channels = 32;
  int heads = 4;
  bool use_ddf = true;
  FreqMode freq_mode = FreqMode::kGated;
};

/// Reduced cross-scale block: y = GELU(conv1x1(x)); out = y + GELU(conv3x3(y)).
struct FusionBlock {
  Conv2d reduce;
  Conv2d conv;

  static FusionBlock make(ParamStore& store, const std::string& name, int in, int out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

/// A fusion junction, either the dual-domain block or the reduced one.
struct Junction {
  std::optional<DDFParams> ddf;
  std::optional<FusionBlock> fusion;

  static Junction make(ParamStore& store, const std::string& name, int in, int out, bool use_ddf, Rng& rng);
  Tensor operator()(const Tensor& x, FreqMode mode, DDFTrace* trace = nullptr) const;
};

struct EncoderTrace {
  DDFTrace s2_junction;  // top-down junction at the S2 resolution (when DDF is used)
};

/// Single attention layer over S5, top-down then bottom-up cross-scale
/// fusion, DDF at the S3 and S2 junctions, all four levels flattened.
class HybridEncoder {
 public:
  static HybridEncoder make(ParamStore& store, const std::string& name, const EncoderConfig& cfg, Rng& rng);

  EncoderMemory operator()(const FeaturePyramid& pyr, EncoderTrace* trace = nullptr) const;

  const EncoderConfig& config() const { return cfg_; }
  /// DDF parameters at the named junction ("td3", "td2", "bu3"); null when DDF is off.
  const DDFParams* ddf(const std::string& junction) const;

 private:
  Tensor aifi(const Tensor& s5) const;

  EncoderConfig cfg_;
  MultiheadAttention attn_;
  LayerNorm norm1_, norm2_;
  Mlp ffn_;
  Conv2d lat5_, lat4_, lat3_;
  Junction td4_, td3_, td2_;
  Conv2d down2_, down3_, down4_;
  Junction bu3_, bu4_, bu5_;
};

/// Cell-center positions of an H x W grid in normalized coordinates, row-major.
std::vector<std::array<double, 2>> grid_positions(int h, int w);

/// [C, H, W] -> [H*W, C].
Tensor flatten_tokens(const Tensor& x);
/// [H*W, C] -> [C, H, W].
Tensor unflatten_tokens(const Tensor& tokens, int h, int w);

}  // namespace sodetr
