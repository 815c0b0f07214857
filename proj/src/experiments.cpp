#include "sodetr/experiments.hpp"

#include <cctype>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace sodetr {

Dataset load_or_generate(const RunConfig& cfg, const std::string& path) {
  if (!path.empty()) return read_dataset(path);
  return gen_dataset(cfg.scene, cfg.scene_count);
}

void adopt_scene(RunConfig& cfg, const SceneConfig& scene) {
  cfg.scene = scene;
  cfg.model.image_size = scene.image_size;
  cfg.model.classes = scene.classes;
  cfg.eval.image_size = scene.image_size;
}

TeacherSignal make_teacher_signal(const RunConfig& cfg, DetectionFile outputs) {
  TeacherSignal t;
  t.outputs = std::move(outputs);
  t.kd = cfg.kd.kd;
  t.schedule.kind = cfg.kd.schedule;
  t.schedule.w0 = cfg.kd.w0;
  return t;
}

RunOutcome run_training(const RunConfig& cfg_in, const Dataset& ds, ParamStore& store, const TeacherSignal* teacher,
                        const Progress& progress, const std::string& tag) {
  RunConfig cfg = cfg_in;
  adopt_scene(cfg, ds.config);
  const auto t0 = std::chrono::steady_clock::now();
  const Detector model = build_detector(store, cfg.model, cfg.train.seed);
  const auto [train_set, val_set] = split_train_val(ds.scenes);
  EpochCallback cb;
  if (progress) cb = [&](const EpochLog& e) { progress(tag, e); };

  RunOutcome out;
  out.train = teacher ? distill_train(model, store, cfg.train, *teacher, train_set, val_set, cb)
                      : train(model, store, cfg.train, train_set, val_set, cb);
  store.assign(out.train.best_params);
  if (!val_set.empty()) out.val = evaluate_model(model, val_set, cfg.eval).metrics;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

namespace {

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void record(ArmResult& r, const Metrics& m) {
  r.ap50.push_back(m.ap50.value_or(0.0));
  r.ap.push_back(m.ap.value_or(0.0));
  r.ap_small.push_back(m.ap_small.value_or(0.0));
}

std::string row(const std::vector<std::string>& cells, const std::vector<int>& widths) {
  std::ostringstream os;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::string c = cells[i];
    if (c.size() < std::size_t(widths[i])) c += std::string(widths[i] - c.size(), ' ');
    os << (i ? " | " : "| ") << c;
  }
  os << " |\n";
  return os.str();
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string per_seed(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fixed(v[i], 3);
  return s;
}

}  // namespace

double ArmResult::mean_ap50() const { return mean(ap50); }
double ArmResult::mean_ap() const { return mean(ap); }
double ArmResult::mean_ap_small() const { return mean(ap_small); }

std::vector<AblationArm> run_ablation(const RunConfig& base, const Dataset& ds, const std::vector<std::uint64_t>& seeds,
                                      const Progress& progress) {
  std::vector<AblationArm> arms = {{false, false, {}}, {true, false, {}}, {false, true, {}}, {true, true, {}}};
  for (AblationArm& arm : arms) {
    arm.result.label = std::string(arm.eiou_select ? "select" : "-") + "/" + (arm.use_ddf ? "ddf" : "-");
    for (std::uint64_t seed : seeds) {
      RunConfig cfg = base;
      cfg.model.eiou_select = arm.eiou_select;
      cfg.model.use_ddf = arm.use_ddf;
      cfg.train.seed = seed;
      ParamStore store;
      const RunOutcome r =
          run_training(cfg, ds, store, nullptr, progress, arm.result.label + " seed " + std::to_string(seed));
      record(arm.result, r.val);
    }
  }
  return arms;
}

std::string ablation_table(const std::vector<AblationArm>& arms) {
  const std::vector<int> w = {12, 7, 6, 6, 8, 20};
  std::string out = row({"Query Select", "Encoder", "AP", "AP50", "AP_small", "AP50 per seed"}, w);
  out += row({"---", "---", "---", "---", "---", "---"}, w);
  for (const AblationArm& a : arms) {
    out += row({a.eiou_select ? "x" : "", a.use_ddf ? "x" : "", fixed(a.result.mean_ap()), fixed(a.result.mean_ap50()),
                fixed(a.result.mean_ap_small()), per_seed(a.result.ap50)},
               w);
  }
  return out;
}

std::string kd_arm_label(ScheduleKind s, KDIoU iou) {
  const std::string name = to_string(s);
  return "+" + std::string(1, char(std::toupper(name[0]))) + name.substr(1) + " + " +
         (iou == KDIoU::kGIoU ? "GIoU" : "Expanded-SIoU");
}

std::vector<std::pair<ScheduleKind, KDIoU>> all_kd_arms() {
  std::vector<std::pair<ScheduleKind, KDIoU>> out;
  for (ScheduleKind s : {ScheduleKind::kConstant, ScheduleKind::kCosine, ScheduleKind::kLinear})
    for (KDIoU k : {KDIoU::kGIoU, KDIoU::kExpandedSIoU}) out.push_back({s, k});
  return out;
}

KDGrid run_kd_grid(const RunConfig& base, const Dataset& ds, const DetectionFile& teacher_outputs,
                   const Metrics& teacher_val, const std::vector<std::uint64_t>& seeds,
                   const std::vector<std::pair<ScheduleKind, KDIoU>>& arms, const Progress& progress) {
  KDGrid grid;
  grid.teacher.label = "Teacher";
  record(grid.teacher, teacher_val);
  grid.student.label = "Student";
  for (std::uint64_t seed : seeds) {
    RunConfig cfg = base;
    cfg.train.seed = seed;
    ParamStore store;
    record(grid.student, run_training(cfg, ds, store, nullptr, progress, "student seed " + std::to_string(seed)).val);
  }
  for (const auto& [schedule, iou] : arms) {
    KDArm arm;
    arm.schedule = schedule;
    arm.iou = iou;
    arm.result.label = kd_arm_label(schedule, iou);
    for (std::uint64_t seed : seeds) {
      RunConfig cfg = base;
      cfg.train.seed = seed;
      cfg.kd.schedule = schedule;
      cfg.kd.kd.iou = iou;
      const TeacherSignal signal = make_teacher_signal(cfg, teacher_outputs);
      ParamStore store;
      const RunOutcome r =
          run_training(cfg, ds, store, &signal, progress, arm.result.label + " seed " + std::to_string(seed));
      record(arm.result, r.val);
    }
    grid.arms.push_back(std::move(arm));
  }
  return grid;
}

std::string kd_table(const KDGrid& grid) {
  const std::vector<int> w = {26, 6, 6, 8, 20};
  std::string out = row({"Model", "AP", "AP50", "AP_small", "AP50 per seed"}, w);
  out += row({"---", "---", "---", "---", "---"}, w);
  auto line = [&](const ArmResult& r) {
    return row({r.label, fixed(r.mean_ap()), fixed(r.mean_ap50()), fixed(r.mean_ap_small()), per_seed(r.ap50)}, w);
  };
  out += line(grid.teacher);
  out += line(grid.student);
  for (const KDArm& a : grid.arms) out += line(a.result);
  return out;
}

}  // namespace sodetr
