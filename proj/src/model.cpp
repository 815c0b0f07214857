#include "sodetr/model.hpp"

#include <algorithm>
#include <numeric>

namespace sodetr {

void ModelConfig::validate() const {
  if (channels <= 0 || channels % 4 != 0) throw ConfigError("channels must be a positive multiple of 4");
  if (heads <= 0 || channels % heads != 0) throw ConfigError("channels must be divisible by heads");
  if (decoder_layers < 0) throw ConfigError("decoder_layers must be non-negative");
  if (queries <= 0) throw ConfigError("queries must be positive");
  if (classes <= 0) throw ConfigError("classes must be positive");
  if (image_size <= 0 || image_size % 32 != 0) throw ConfigError("image_size must be a positive multiple of 32");
  if (!(alpha2 > 0)) throw ConfigError("alpha2 must be positive");
  if (!(theta >= 2 && theta <= 6)) throw ConfigError("theta must lie in [2, 6]");
}

MatchConfig ModelConfig::match_config(const LossWeights& w) const {
  MatchConfig m;
  m.weights = w;
  m.expand.alpha2 = eiou_select ? alpha2 : 1.0;
  m.siou.theta = theta;
  return m;
}

Backbone Backbone::make(ParamStore& store, const std::string& name, int channels, Rng& rng) {
  Backbone b;
  const int stem = std::max(4, channels / 2);
  b.stem = Conv2d::make(store, name + ".stem", 1, stem, 3, 2, rng);
  int in = stem;
  for (int s = 0; s < 4; ++s) {
    const std::string p = name + ".stage" + std::to_string(s + 2);
    b.stages[s][0] = Conv2d::make(store, p + ".down", in, channels, 3, 2, rng);
    b.stages[s][1] = Conv2d::make(store, p + ".conv", channels, channels, 3, 1, rng);
    b.proj[s] = Conv2d::make(store, p + ".proj", channels, channels, 1, 1, rng);
    in = channels;
  }
  return b;
}

FeaturePyramid Backbone::operator()(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 1 || image.dim(1) % 32 != 0 || image.dim(2) % 32 != 0) {
    throw ShapeError("backbone expects a [1,H,W] image with H, W divisible by 32, got " + to_string(image.shape()));
  }
  FeaturePyramid pyr;
  Tensor x = gelu(stem(image));
  for (int s = 0; s < 4; ++s) {
    x = gelu(stages[s][1](gelu(stages[s][0](x))));
    pyr.levels[s] = proj[s](x);
  }
  return pyr;
}

namespace {

void zero(Tensor t) { t.mutable_value().setZero(); }
void fill(Tensor t, double v) { t.mutable_value().setConstant(v); }

const double kPriorLogit = std::log(0.01 / 0.99);

}  // namespace

DecoderLayer DecoderLayer::make(ParamStore& store, const std::string& name, const ModelConfig& cfg, Rng& rng) {
  const int c = cfg.channels;
  DecoderLayer l;
  l.self_attn = MultiheadAttention::make(store, name + ".self_attn", c, cfg.heads, rng);
  l.norm1 = LayerNorm::make(store, name + ".norm1", c);
  l.cross_attn = MultiheadAttention::make(store, name + ".cross_attn", c, cfg.heads, rng);
  l.norm2 = LayerNorm::make(store, name + ".norm2", c);
  l.ffn = Mlp::make(store, name + ".ffn", c, 2 * c, c, rng);
  l.norm3 = LayerNorm::make(store, name + ".norm3", c);
  l.cls_head = Linear::make(store, name + ".cls", c, cfg.classes, rng);
  l.box_head = Mlp::make(store, name + ".box", c, c, 4, rng);
  fill(l.cls_head.bias, kPriorLogit);
  zero(l.box_head.fc2.weight);
  zero(l.box_head.fc2.bias);
  return l;
}

Detector Detector::make(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Detector d;
  d.cfg_ = cfg;
  const int c = cfg.channels;
  std::vector<std::array<int, 2>> shapes;
  for (int s = 4; s <= 32; s *= 2) shapes.push_back({cfg.image_size / s, cfg.image_size / s});
  SelectionConfig sel;
  sel.k = cfg.queries;
  d.anchors_ = generate_anchors(shapes, sel);
  if (cfg.queries > d.anchors_.valid.count()) throw ConfigError("more queries than valid anchors");

  d.backbone_ = Backbone::make(store, "backbone", c, rng);
  EncoderConfig ec;
  ec.channels = c;
  ec.heads = cfg.heads;
  ec.use_ddf = cfg.use_ddf;
  ec.freq_mode = cfg.freq_mode;
  d.encoder_ = HybridEncoder::make(store, "encoder", ec, rng);
  d.enc_proj_ = Linear::make(store, "enc_head.proj", c, c, rng);
  d.enc_norm_ = LayerNorm::make(store, "enc_head.norm", c);
  d.enc_cls_ = Linear::make(store, "enc_head.cls", c, cfg.classes, rng);
  d.enc_box_ = Mlp::make(store, "enc_head.box", c, c, 4, rng);
  fill(d.enc_cls_.bias, kPriorLogit);
  zero(d.enc_box_.fc2.weight);
  zero(d.enc_box_.fc2.bias);
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    d.layers_.push_back(DecoderLayer::make(store, "decoder" + std::to_string(l), cfg, rng));
  }
  return d;
}

Detector build_detector(ParamStore& store, const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  return Detector::make(store, cfg, rng);
}

namespace {

std::vector<std::array<double, 2>> centers_of(const Tensor& boxes) {
  const Array& v = boxes.value();
  std::vector<std::array<double, 2>> out(static_cast<std::size_t>(boxes.dim(0)));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {v(4 * i), v(4 * i + 1)};
  return out;
}

Tensor constant(const RowMatrix& m) {
  return Tensor({static_cast<int>(m.rows()), static_cast<int>(m.cols())}, m.reshaped<Eigen::RowMajor>());
}

}  // namespace

ModelOutput Detector::forward(const Tensor& image, bool keep_attention, EncoderTrace* trace) const {
  if (image.dim(1) != cfg_.image_size || image.dim(2) != cfg_.image_size) {
    throw ShapeError("image size differs from the model's image_size");
  }
  const EncoderMemory mem = encoder_(backbone_(image), trace);
  if (mem.size() != anchors_.size()) throw ShapeError("memory token count does not match the anchor grid");

  ModelOutput out;
  out.level_shapes = mem.level_shapes;
  const Tensor anchor_logits = constant(anchors_.logits);
  const Tensor enc = enc_norm_(enc_proj_(mem.tokens));
  const Tensor enc_delta = enc_box_(enc);
  out.encoder_dense = {enc_cls_(enc), refine_in_logit_space(anchor_logits, enc_delta)};

  // Selection ranks by the best class logit, a monotone image of the score.
  const RowMatrix logits =
      Eigen::Map<const RowMatrix>(out.encoder_dense.logits.value().data(), mem.size(), cfg_.classes);
  out.selected = select_topk(max_class_scores(logits), anchors_.valid, cfg_.queries);
  out.encoder_selected = {gather_rows(out.encoder_dense.logits, out.selected),
                          gather_rows(out.encoder_dense.boxes, out.selected)};

  Tensor tgt = gather_rows(enc, out.selected).detach();
  Tensor ref_logits = (gather_rows(anchor_logits, out.selected) + gather_rows(enc_delta, out.selected)).detach();
  Tensor ref_boxes = out.encoder_selected.boxes.detach();
  const Tensor memory_keys = mem.tokens + constant(mem.position_encoding);

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DecoderLayer& layer = layers_[l];
    const Tensor qpos = constant(sine_position_encoding(centers_of(ref_boxes), cfg_.channels));
    const Tensor q = tgt + qpos;
    tgt = layer.norm1(tgt + layer.self_attn.attend(q, q, tgt).output);
    const bool last = l + 1 == layers_.size();
    AttentionResult cross = layer.cross_attn.attend(tgt + qpos, memory_keys, mem.tokens, keep_attention && last);
    tgt = layer.norm2(tgt + cross.output);
    tgt = layer.norm3(tgt + layer.ffn(tgt));
    if (keep_attention && last) out.cross_attention = std::move(cross.weights);

    const Tensor delta = layer.box_head(tgt);
    HeadOutput head{layer.cls_head(tgt), refine_in_logit_space(ref_logits, delta)};
    ref_logits = (ref_logits + delta).detach();
    ref_boxes = head.boxes.detach();
    out.decoder.push_back(std::move(head));
  }
  return out;
}

DetectionSet postprocess(const HeadOutput& head, int max_dets) {
  const int k = head.logits.dim(0), classes = head.logits.dim(1);
  const Array& lv = head.logits.value();
  std::vector<int> order(static_cast<std::size_t>(k) * classes);
  std::iota(order.begin(), order.end(), 0);
  const int keep = std::min<int>(max_dets, static_cast<int>(order.size()));
  std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                    [&](int a, int b) { return lv(a) > lv(b) || (lv(a) == lv(b) && a < b); });
  DetectionSet out;
  for (int n = 0; n < keep; ++n) {
    const int q = order[n] / classes, c = order[n] % classes;
    Detection d;
    d.box = box_at(head.boxes, q);
    d.label = c;
    d.score = sigmoid(lv(order[n]));
    for (int cc = 0; cc < classes; ++cc) d.scores.push_back(sigmoid(lv(Eigen::Index(q) * classes + cc)));
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace sodetr
