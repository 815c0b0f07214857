#include "sodetr/train.hpp"

#include "sodetr/checkpoint.hpp"

#include <json.hpp>

#include <cmath>
#include <numeric>

namespace sodetr {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(optimizer.learning_rate >= 0)) throw ConfigError("learning_rate must be non-negative");
  if (!(optimizer.weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
  loss_weights.validate();
}

StepLoss image_loss(const Detector& model, const Scene& scene, const MatchConfig& mc, const TeacherSignal* teacher,
                    double kd_weight) {
  const ModelOutput out = model.forward(image_tensor(scene));
  const auto& gts = scene.annotations;
  for (const HeadOutput* h : {&out.encoder_dense, &out.final_head()}) {
    if (!h->logits.value().allFinite() || !h->boxes.value().allFinite()) {
      throw TrainingDiverged("non-finite model outputs on scene " + std::to_string(scene.id));
    }
  }
  StepLoss s;

  // Encoder head: dense over all anchors with its own assignment.
  const Assignment enc_assign = hungarian(matching_cost(to_detections(out.encoder_dense), gts, mc));
  const DetectionLoss enc = detection_loss({out.encoder_dense}, gts, enc_assign, mc);
  s.detection = enc;
  if (!out.decoder.empty()) {
    const Assignment dec_assign = hungarian(matching_cost(to_detections(out.decoder.back()), gts, mc));
    const DetectionLoss dec = detection_loss(out.decoder, gts, dec_assign, mc);
    s.detection.total = dec.total + enc.total;
    s.detection.cls += dec.cls;
    s.detection.l1 += dec.l1;
    s.detection.iou += dec.iou;
    s.detection.heads.insert(s.detection.heads.end(), dec.heads.begin(), dec.heads.end());
  }
  s.total = s.detection.total;

  if (teacher) {
    const auto it = teacher->outputs.find(scene.id);
    if (it == teacher->outputs.end()) throw ConfigError("no teacher output for scene " + std::to_string(scene.id));
    const HeadOutput& student = out.final_head();
    const KDPairing pairing = kd_pairing(to_detections(student), it->second, teacher->kd.conf_threshold, teacher->kd.expand);
    s.kd = kd_total(make_kd_batch(student, it->second, pairing), teacher->kd);
    s.kd_weight = kd_weight;
    if (kd_weight != 0.0) s.total = s.total + s.kd.total * kd_weight;
  }
  return s;
}

namespace {

std::vector<int> shuffled(int n, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  return idx;
}

TrainResult run(const Detector& model, ParamStore& store, const TrainConfig& cfg, const TeacherSignal* teacher,
                const std::vector<Scene>& train_set, const std::vector<Scene>& val_set, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  const MatchConfig mc = model.config().match_config(cfg.loss_weights);
  Optimizer opt(store, cfg.optimizer);
  Rng rng = Rng(cfg.seed).fork(0x7261696e);
  const auto& params = store.params();
  std::ofstream log;
  if (!cfg.log_path.empty()) log = open_output(cfg.log_path);

  TrainResult result;
  long step = 0;
  const int n = static_cast<int>(train_set.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog e;
    e.epoch = epoch;
    const std::vector<int> order = shuffled(n, rng);
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int end = std::min(n, start + cfg.batch_size);
      std::vector<Array> grads;
      grads.reserve(params.size());
      for (const NamedTensor& p : params) grads.push_back(Array::Zero(p.tensor.numel()));
      const double kd_weight = teacher ? schedule_weight(teacher->schedule, step) : 0.0;
      for (int b = start; b < end; ++b) {
        const Scene& scene = train_set[order[b]];
        StepLoss s;
        try {
          s = image_loss(model, scene, mc, teacher, kd_weight);
        } catch (const TrainingDiverged& err) {
          throw TrainingDiverged(std::string(err.what()) + " at epoch " + std::to_string(epoch));
        }
        const double total = s.total.item();
        if (!std::isfinite(total)) {
          throw TrainingDiverged("loss became " + std::to_string(total) + " at epoch " + std::to_string(epoch) +
                                 ", scene " + std::to_string(scene.id) + " (cls " + std::to_string(s.detection.cls) +
                                 ", l1 " + std::to_string(s.detection.l1) + ", iou " + std::to_string(s.detection.iou) +
                                 ")");
        }
        const Gradients g = backward(s.total);
        for (std::size_t i = 0; i < params.size(); ++i) {
          if (const Array* gi = g.find(params[i].tensor.node())) grads[i] += *gi;
        }
        e.loss_total += total;
        e.loss_cls += s.detection.cls;
        e.loss_l1 += s.detection.l1;
        e.loss_iou += s.detection.iou;
        e.kd_total += s.kd.total.defined() ? s.kd.total.item() : 0.0;
        e.kd_weight = kd_weight;
      }
      const double inv = 1.0 / (end - start);
      for (Array& g : grads) g *= inv;
      opt.step(grads);
      ++step;
    }
    for (double* v : {&e.loss_total, &e.loss_cls, &e.loss_l1, &e.loss_iou, &e.kd_total}) *v /= n;

    const bool eval_now = !val_set.empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
    if (eval_now) {
      EvalConfig ec;
      ec.image_size = model.config().image_size;
      ec.iou_thresholds = {0.5};
      e.val_ap50 = evaluate_model(model, val_set, ec).metrics.ap50.value_or(0.0);
      if (*e.val_ap50 > result.best_ap50) {
        result.best_ap50 = *e.val_ap50;
        result.best_epoch = epoch;
        result.best_params = store.snapshot();
        if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, result.best_params);
      }
    }
    if (log.is_open()) log << epoch_log_json(e) << '\n' << std::flush;
    result.log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  if (result.best_params.empty()) {
    result.best_params = store.snapshot();
    if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, result.best_params);
  }
  return result;
}

}  // namespace

TrainResult train(const Detector& model, ParamStore& store, const TrainConfig& cfg, const std::vector<Scene>& train_set,
                  const std::vector<Scene>& val_set, const EpochCallback& on_epoch) {
  return run(model, store, cfg, nullptr, train_set, val_set, on_epoch);
}

TrainResult distill_train(const Detector& model, ParamStore& store, const TrainConfig& cfg, TeacherSignal teacher,
                          const std::vector<Scene>& train_set, const std::vector<Scene>& val_set,
                          const EpochCallback& on_epoch) {
  teacher.kd.weights.validate();
  const long steps_per_epoch = (static_cast<long>(train_set.size()) + cfg.batch_size - 1) / cfg.batch_size;
  teacher.schedule.total_steps = std::max(1L, steps_per_epoch * cfg.epochs);
  return run(model, store, cfg, &teacher, train_set, val_set, on_epoch);
}

DetectionFile teacher_outputs(const Detector& teacher, const std::vector<Scene>& scenes) {
  NoGradGuard no_grad;
  DetectionFile out;
  for (const Scene& s : scenes) out[s.id] = to_detections(teacher.forward(image_tensor(s)).final_head());
  return out;
}

std::vector<EvalImage> eval_images(const DetectionFile& dets, const std::vector<Scene>& scenes) {
  std::vector<EvalImage> out;
  for (const Scene& s : scenes) {
    EvalImage img;
    const auto it = dets.find(s.id);
    if (it != dets.end()) img.detections = it->second;
    img.ground_truth = s.annotations;
    out.push_back(std::move(img));
  }
  return out;
}

EvalResult evaluate_model(const Detector& model, const std::vector<Scene>& scenes, const EvalConfig& cfg) {
  NoGradGuard no_grad;
  EvalResult r;
  for (const Scene& s : scenes) r.detections[s.id] = postprocess(model.forward(image_tensor(s)).final_head(), cfg.max_dets);
  r.metrics = average_precision(eval_images(r.detections, scenes), model.config().classes, cfg);
  return r;
}

std::string epoch_log_json(const EpochLog& e) {
  nlohmann::json j = {{"epoch", e.epoch},       {"loss_total", e.loss_total}, {"loss_cls", e.loss_cls},
                      {"loss_l1", e.loss_l1},   {"loss_iou", e.loss_iou},     {"kd_weight", e.kd_weight},
                      {"kd_total", e.kd_total}, {"val_ap50", nullptr}};
  if (e.val_ap50) j["val_ap50"] = *e.val_ap50;
  return j.dump();
}

}  // namespace sodetr
