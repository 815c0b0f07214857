#pragma once

#include "sodetr/encoder.hpp"
#include "sodetr/matching.hpp"
#include "sodetr/query_selection.hpp"

#include <vector>

namespace sodetr {

struct ModelConfig {
  int channels = 32;
  int decoder_layers = 2;
  int heads = 4;
  int queries = 60;
  int classes = 3;
  int image_size = 96;
  double alpha2 = 2.0;
  double theta = 4.0;
  FreqMode freq_mode = FreqMode::kGated;
  bool use_ddf = true;
  bool eiou_select = true;  // false: plain IoU (alpha2 = 1) in targets and losses

  void validate() const;
  /// Matching and loss settings implied by this model.
  MatchConfig match_config(const LossWeights& w = {}) const;
};

/// Stem (stride 2) then four stages of [stride-2 conv, conv], GELU after
/// each, every stage output projected to C channels by a 1x1 conv.
struct Backbone {
  Conv2d stem;
  std::array<std::array<Conv2d, 2>, 4> stages;
  std::array<Conv2d, 4> proj;

  static Backbone make(ParamStore& store, const std::string& name, int channels, Rng& rng);
  FeaturePyramid operator()(const Tensor& image) const;
};

struct DecoderLayer {
  MultiheadAttention self_attn, cross_attn;
  LayerNorm norm1, norm2, norm3;
  Mlp ffn;
  Linear cls_head;
  Mlp box_head;

  static DecoderLayer make(ParamStore& store, const std::string& name, const ModelConfig& cfg, Rng& rng);
};

struct ModelOutput {
  HeadOutput encoder_dense;          // every anchor
  std::vector<int> selected;         // top-k anchor indices, descending score
  HeadOutput encoder_selected;       // encoder head at the selected anchors
  std::vector<HeadOutput> decoder;   // one per decoder layer
  RowMatrix cross_attention;         // last layer, head-averaged [k, N]; on request
  std::vector<std::array<int, 2>> level_shapes;

  /// The last decoder layer, or the selected encoder head without decoder layers.
  const HeadOutput& final_head() const { return decoder.empty() ? encoder_selected : decoder.back(); }
};

/// Backbone, hybrid encoder, encoder head with top-k query selection, and
/// an iterative decoder refining boxes in logit space.
class Detector {
 public:
  static Detector make(ParamStore& store, const ModelConfig& cfg, Rng& rng);

  ModelOutput forward(const Tensor& image, bool keep_attention = false, EncoderTrace* trace = nullptr) const;

  const ModelConfig& config() const { return cfg_; }
  const AnchorSet& anchors() const { return anchors_; }
  const HybridEncoder& encoder() const { return encoder_; }
  const Backbone& backbone() const { return backbone_; }

 private:
  ModelConfig cfg_;
  AnchorSet anchors_;
  Backbone backbone_;
  HybridEncoder encoder_;
  Linear enc_proj_;
  LayerNorm enc_norm_;
  Linear enc_cls_;
  Mlp enc_box_;
  std::vector<DecoderLayer> layers_;
};

/// Builds and initializes a detector: class biases at the 0.01 prior,
/// box-delta output layers at zero so initial boxes equal their anchors.
Detector build_detector(ParamStore& store, const ModelConfig& cfg, std::uint64_t seed);

/// Flattens queries x classes and keeps the max_dets highest scores.
DetectionSet postprocess(const HeadOutput& head, int max_dets);

}  // namespace sodetr
