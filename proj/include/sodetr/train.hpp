#pragma once

#include "sodetr/distillation.hpp"
#include "sodetr/evaluation.hpp"
#include "sodetr/io.hpp"
#include "sodetr/model.hpp"
#include "sodetr/scene.hpp"

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sodetr {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs = 60;
  int batch_size = 4;
  OptimizerConfig optimizer;
  LossWeights loss_weights;
  std::uint64_t seed = 0;
  int eval_every = 1;           // epochs between validation passes
  std::string checkpoint_path;  // best-AP50 checkpoint; empty to skip
  std::string log_path;         // metrics JSON lines; empty to skip

  void validate() const;
};

/// Frozen teacher signal for distillation: final-layer outputs per scene id.
struct TeacherSignal {
  DetectionFile outputs;
  KDConfig kd;
  Schedule schedule;  // total_steps is filled in by distill_train
};

struct EpochLog {
  int epoch = 0;
  double loss_total = 0, loss_cls = 0, loss_l1 = 0, loss_iou = 0;
  double kd_weight = 0, kd_total = 0;
  std::optional<double> val_ap50;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_ap50 = -1.0;
  int best_epoch = -1;
  std::vector<NamedTensor> best_params;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch training with per-image graphs; gradients are summed in batch
/// order and averaged before each optimizer step.
TrainResult train(const Detector& model, ParamStore& store, const TrainConfig& cfg, const std::vector<Scene>& train_set,
                  const std::vector<Scene>& val_set, const EpochCallback& on_epoch = {});

/// Training with loss = detection + schedule_weight(t) * kd_total against a
/// frozen teacher signal.
TrainResult distill_train(const Detector& model, ParamStore& store, const TrainConfig& cfg, TeacherSignal teacher,
                          const std::vector<Scene>& train_set, const std::vector<Scene>& val_set,
                          const EpochCallback& on_epoch = {});

/// Final-layer outputs, one detection per query, for every scene.
DetectionFile teacher_outputs(const Detector& teacher, const std::vector<Scene>& scenes);

struct EvalResult {
  Metrics metrics;
  DetectionFile detections;
};

EvalResult evaluate_model(const Detector& model, const std::vector<Scene>& scenes, const EvalConfig& cfg = {});
std::vector<EvalImage> eval_images(const DetectionFile& dets, const std::vector<Scene>& scenes);

/// Per-image training loss (detection plus optional distillation term).
struct StepLoss {
  Tensor total;
  DetectionLoss detection;
  KDLoss kd;
  double kd_weight = 0;
};

StepLoss image_loss(const Detector& model, const Scene& scene, const MatchConfig& mc,
                    const TeacherSignal* teacher = nullptr, double kd_weight = 0.0);

std::string epoch_log_json(const EpochLog& e);

}  // namespace sodetr
