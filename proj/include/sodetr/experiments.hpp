#pragma once

#include "sodetr/config.hpp"

#include <functional>
#include <string>
#include <vector>

namespace sodetr {

/// Reads `path` when given, otherwise generates cfg.scene_count scenes from cfg.scene.
Dataset load_or_generate(const RunConfig& cfg, const std::string& path);

/// Copies the dataset's scene geometry into the model and eval sections.
void adopt_scene(RunConfig& cfg, const SceneConfig& scene);

/// KD settings of cfg around recorded teacher outputs.
TeacherSignal make_teacher_signal(const RunConfig& cfg, DetectionFile outputs);

struct RunOutcome {
  TrainResult train;
  Metrics val;  // full metrics of the best-AP50 parameters on the validation split
  double seconds = 0;
};

using Progress = std::function<void(const std::string& tag, const EpochLog&)>;

/// Trains cfg.model (initialized from cfg.train.seed) on the dataset's
/// train split; the best parameters are left in `store`. With a teacher
/// signal the run is a distillation run.
RunOutcome run_training(const RunConfig& cfg, const Dataset& ds, ParamStore& store,
                        const TeacherSignal* teacher = nullptr, const Progress& progress = {},
                        const std::string& tag = "");

struct ArmResult {
  std::string label;
  std::vector<double> ap50, ap, ap_small;  // one entry per seed
  double mean_ap50() const;
  double mean_ap() const;
  double mean_ap_small() const;
};

/// The query-selection x encoder grid: (eiou_select, use_ddf) in the order
/// (off, off), (on, off), (off, on), (on, on). Seeds vary initialization and
/// shuffling; the dataset is fixed.
struct AblationArm {
  bool eiou_select = false;
  bool use_ddf = false;
  ArmResult result;
};
std::vector<AblationArm> run_ablation(const RunConfig& base, const Dataset& ds, const std::vector<std::uint64_t>& seeds,
                                      const Progress& progress = {});
std::string ablation_table(const std::vector<AblationArm>& arms);

/// Schedule x KD-IoU grid against a frozen teacher signal, preceded by the
/// undistilled student on the same seeds. Labels read "+Linear + GIoU".
struct KDArm {
  ScheduleKind schedule = ScheduleKind::kLinear;
  KDIoU iou = KDIoU::kExpandedSIoU;
  ArmResult result;
};
struct KDGrid {
  ArmResult teacher;  // single entry
  ArmResult student;
  std::vector<KDArm> arms;
};
std::string kd_arm_label(ScheduleKind s, KDIoU iou);
KDGrid run_kd_grid(const RunConfig& base, const Dataset& ds, const DetectionFile& teacher_outputs,
                   const Metrics& teacher_val, const std::vector<std::uint64_t>& seeds,
                   const std::vector<std::pair<ScheduleKind, KDIoU>>& arms, const Progress& progress = {});
std::string kd_table(const KDGrid& grid);

std::vector<std::pair<ScheduleKind, KDIoU>> all_kd_arms();

}  // namespace sodetr
