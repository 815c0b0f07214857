#include "sodetr/checkpoint.hpp"
#include "sodetr/experiments.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

using namespace sodetr;
namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Options every subcommand shares. Resolution order: defaults, a config
// file found beside an input checkpoint, --config, --set, subcommand flags,
// then --seed.
struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;

  void add(CLI::App* app, bool out_required = true) {
    app->add_option("--config", config_path, "Run configuration file ([section] / key = value)");
    app->add_option("--set", sets, "Override one key, as section.key=value (repeatable)");
    app->add_option("--seed", seed, "Single seed for every random choice");
    auto* o = app->add_option("--out", out, "Output directory");
    if (out_required) o->required();
  }

  RunConfig resolve(const std::string& beside_checkpoint = "") const {
    RunConfig cfg;
    if (!beside_checkpoint.empty()) {
      const fs::path sibling = fs::path(beside_checkpoint).parent_path() / "config.cfg";
      if (fs::exists(sibling)) cfg.load_file(sibling.string());
    }
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const std::string& s : sets) {
      const auto dot = s.find('.'), eq = s.find('=');
      if (dot == std::string::npos || eq == std::string::npos || dot > eq) {
        throw UsageError("--set expects section.key=value, got '" + s + "'");
      }
      cfg.set(s.substr(0, dot), s.substr(dot + 1, eq - dot - 1), s.substr(eq + 1));
    }
    return cfg;
  }

  void finish(RunConfig& cfg) const {
    if (seed) cfg.set_seed(*seed);
  }
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--seeds expects a comma-separated list of integers, got '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError("--seeds is empty");
  return out;
}

fs::path prepare_dir(const std::string& dir) {
  fs::create_directories(dir);
  return fs::path(dir);
}

void save_config(const RunConfig& cfg, const fs::path& dir) { cfg.save((dir / "config.cfg").string()); }

nlohmann::json metrics_json(const Metrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& c : m.per_class_ap) per_class.push_back(opt(c));
  return {{"ap", opt(m.ap)},          {"ap50", opt(m.ap50)},           {"ap75", opt(m.ap75)},
          {"ap_small", opt(m.ap_small)}, {"ap_medium", opt(m.ap_medium)}, {"ap_large", opt(m.ap_large)},
          {"per_class_ap", per_class}};
}

void print_metrics(const Metrics& m) {
  auto show = [](const char* name, const std::optional<double>& v) {
    if (v) std::printf("  %-10s %.4f\n", name, *v);
    else std::printf("  %-10s n/a\n", name);
  };
  show("AP", m.ap);
  show("AP50", m.ap50);
  show("AP75", m.ap75);
  show("AP_small", m.ap_small);
  show("AP_medium", m.ap_medium);
  show("AP_large", m.ap_large);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_output(path.string());
  out << text;
}

Progress epoch_printer() {
  return [](const std::string& tag, const EpochLog& e) {
    std::printf("%s%sepoch %3d  loss %.4f (cls %.4f l1 %.4f iou %.4f)", tag.c_str(), tag.empty() ? "" : "  ", e.epoch,
                e.loss_total, e.loss_cls, e.loss_l1, e.loss_iou);
    if (e.kd_weight > 0 || e.kd_total > 0) std::printf("  kd %.4f x %.3f", e.kd_total, e.kd_weight);
    if (e.val_ap50) std::printf("  val AP50 %.4f", *e.val_ap50);
    std::printf("\n");
    std::fflush(stdout);
  };
}

std::vector<Scene> pick_split(const Dataset& ds, const std::string& split) {
  if (split == "all") return ds.scenes;
  const auto [train, val] = split_train_val(ds.scenes);
  if (split == "train") return train;
  if (split == "val") return val;
  throw UsageError("--split must be train, val or all");
}

// ---------------------------------------------------------------------------

struct GenData {
  Common common;
  std::optional<int> n;
  int run() const {
    RunConfig cfg = common.resolve();
    if (n) cfg.scene_count = *n;
    common.finish(cfg);
    cfg.scene.validate();
    const Dataset ds = gen_dataset(cfg.scene, cfg.scene_count);
    const fs::path out(common.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_dataset(ds, out.string());
    fs::path cfg_path = out;
    cfg_path.replace_extension(".cfg");
    cfg.save(cfg_path.string());
    std::size_t objects = 0;
    for (const Scene& s : ds.scenes) objects += s.annotations.size();
    std::printf("wrote %zu scenes (%zu objects), seed %llu, to %s\n", ds.scenes.size(), objects,
                static_cast<unsigned long long>(cfg.scene.seed), out.string().c_str());
    return 0;
  }
};

struct Train {
  Common common;
  std::string data;
  bool ablation = false, no_eiou = false, no_ddf = false, teacher = false;
  std::string seeds = "1,2,3";
  int run() const {
    if (ablation && (no_eiou || no_ddf)) throw UsageError("--ablation runs every arm; drop --no-eiou-select/--no-ddf");
    if (ablation && teacher) throw UsageError("--ablation and --teacher cannot be combined");
    RunConfig cfg = common.resolve();
    if (no_eiou) cfg.model.eiou_select = false;
    if (no_ddf) cfg.model.use_ddf = false;
    if (teacher) cfg.model = cfg.teacher_model();
    common.finish(cfg);
    const Dataset ds = load_or_generate(cfg, data);
    adopt_scene(cfg, ds.config);
    cfg.scene_count = static_cast<int>(ds.scenes.size());
    const fs::path dir = prepare_dir(common.out);
    save_config(cfg, dir);

    if (ablation) {
      const auto arms = run_ablation(cfg, ds, parse_seeds(seeds), epoch_printer());
      const std::string table = ablation_table(arms);
      write_text(dir / "ablation.md", table);
      std::printf("\n%s", table.c_str());
      return 0;
    }
    cfg.train.checkpoint_path = (dir / "checkpoint.bin").string();
    cfg.train.log_path = (dir / "metrics.jsonl").string();
    ParamStore store;
    const RunOutcome r = run_training(cfg, ds, store, nullptr, epoch_printer());
    nlohmann::json summary = {{"best_epoch", r.train.best_epoch}, {"best_val_ap50", r.train.best_ap50},
                              {"seconds", r.seconds}, {"val", metrics_json(r.val)}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    std::printf("best epoch %d, validation metrics:\n", r.train.best_epoch);
    print_metrics(r.val);
    return 0;
  }
};

struct Distill {
  Common common;
  std::string data, teacher_ckpt, replay, write_replay_path, seeds = "1,2,3";
  std::optional<std::string> schedule, kd_iou;
  bool grid = false;
  int run() const {
    if (!teacher_ckpt.empty() && !replay.empty()) throw UsageError("give either --teacher or --replay, not both");
    if (grid && (schedule || kd_iou)) throw UsageError("--grid runs every schedule and IoU; drop --schedule/--kd-iou");
    RunConfig cfg = common.resolve();
    if (!teacher_ckpt.empty()) cfg.kd.teacher_checkpoint = teacher_ckpt;
    if (!replay.empty()) cfg.kd.replay = replay;
    if (schedule) cfg.kd.schedule = parse_schedule_kind(*schedule);
    if (kd_iou) cfg.kd.kd.iou = parse_kd_iou(*kd_iou);
    common.finish(cfg);
    if (cfg.kd.teacher_checkpoint.empty() && cfg.kd.replay.empty()) {
      throw ConfigError("distillation needs a teacher: pass --teacher CHECKPOINT or --replay FILE");
    }
    if (!cfg.kd.teacher_checkpoint.empty() && !cfg.kd.replay.empty()) {
      throw ConfigError("kd.teacher_checkpoint and kd.replay are both set");
    }
    const Dataset ds = load_or_generate(cfg, data);
    adopt_scene(cfg, ds.config);
    cfg.scene_count = static_cast<int>(ds.scenes.size());
    const auto [train_set, val_set] = split_train_val(ds.scenes);

    DetectionFile outputs;
    Metrics teacher_val;
    if (!cfg.kd.teacher_checkpoint.empty()) {
      ParamStore tstore;
      const Detector teacher = build_detector(tstore, cfg.teacher_model(), 0);
      tstore.assign(load_checkpoint(cfg.kd.teacher_checkpoint));
      outputs = teacher_outputs(teacher, ds.scenes);
      if (!val_set.empty()) teacher_val = evaluate_model(teacher, val_set, cfg.eval).metrics;
    } else {
      outputs = read_replay(cfg.kd.replay);
      for (const Scene& s : train_set) {
        if (!outputs.count(s.id)) throw ConfigError("replay has no record for scene " + std::to_string(s.id));
      }
      teacher_val = average_precision(eval_images(outputs, val_set), cfg.model.classes, cfg.eval);
    }
    const fs::path dir = prepare_dir(common.out);
    save_config(cfg, dir);
    if (!write_replay_path.empty()) write_replay(outputs, write_replay_path);

    if (grid) {
      const KDGrid g = run_kd_grid(cfg, ds, outputs, teacher_val, parse_seeds(seeds), all_kd_arms(), epoch_printer());
      const std::string table = kd_table(g);
      write_text(dir / "kd_grid.md", table);
      std::printf("\n%s", table.c_str());
      return 0;
    }
    cfg.train.checkpoint_path = (dir / "checkpoint.bin").string();
    cfg.train.log_path = (dir / "metrics.jsonl").string();
    const TeacherSignal signal = make_teacher_signal(cfg, std::move(outputs));
    ParamStore store;
    const RunOutcome r =
        run_training(cfg, ds, store, &signal, epoch_printer(), kd_arm_label(cfg.kd.schedule, cfg.kd.kd.iou));
    nlohmann::json summary = {{"arm", kd_arm_label(cfg.kd.schedule, cfg.kd.kd.iou)},
                              {"best_epoch", r.train.best_epoch},
                              {"best_val_ap50", r.train.best_ap50},
                              {"seconds", r.seconds},
                              {"val", metrics_json(r.val)},
                              {"teacher_val", metrics_json(teacher_val)}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    std::printf("best epoch %d, validation metrics:\n", r.train.best_epoch);
    print_metrics(r.val);
    return 0;
  }
};

struct Eval {
  Common common;
  std::string data, checkpoint, detections, split = "all";
  int run() const {
    if (checkpoint.empty() == detections.empty()) throw UsageError("give exactly one of --checkpoint or --detections");
    RunConfig cfg = common.resolve(checkpoint);
    common.finish(cfg);
    const Dataset ds = load_or_generate(cfg, data);
    adopt_scene(cfg, ds.config);
    cfg.scene_count = static_cast<int>(ds.scenes.size());
    const std::vector<Scene> scenes = pick_split(ds, split);
    const fs::path dir = prepare_dir(common.out);
    save_config(cfg, dir);

    Metrics m;
    if (!checkpoint.empty()) {
      ParamStore store;
      const Detector model = build_detector(store, cfg.model, 0);
      store.assign(load_checkpoint(checkpoint));
      const EvalResult r = evaluate_model(model, scenes, cfg.eval);
      write_detections(r.detections, (dir / "detections.jsonl").string());
      m = r.metrics;
    } else {
      m = average_precision(eval_images(read_detections(detections), scenes), cfg.model.classes, cfg.eval);
    }
    write_text(dir / "metrics.json", metrics_json(m).dump(2) + "\n");
    std::printf("%zu images (%s split):\n", scenes.size(), split.c_str());
    print_metrics(m);
    return 0;
  }
};

RowMatrix channel_mean(const Tensor& t) {
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  RowMatrix out = RowMatrix::Zero(h, w);
  for (int k = 0; k < c; ++k) out += Eigen::Map<const RowMatrix>(t.value().data() + std::size_t(k) * h * w, h, w);
  return out / c;
}

struct DemoDdf {
  Common common;
  std::string data, checkpoint;
  int index = 0;
  bool zero_image = false;
  int queries_to_dump = 4;
  int run() const {
    if (checkpoint.empty()) throw ConfigError("demo-ddf needs --checkpoint");
    if (!fs::exists(checkpoint)) throw IoError("checkpoint '" + checkpoint + "' does not exist");
    RunConfig cfg = common.resolve(checkpoint);
    common.finish(cfg);
    if (!cfg.model.use_ddf) throw ConfigError("demo-ddf needs a model with model.use_ddf = true");
    Dataset ds;
    if (data.empty()) {
      ds.config = cfg.scene;
      ds.scenes.push_back(gen_scene(cfg.scene, index));
    } else {
      ds = read_dataset(data);
      if (index < 0 || index >= int(ds.scenes.size())) throw ConfigError("--index outside the dataset");
      ds.scenes = {ds.scenes[index]};
    }
    adopt_scene(cfg, ds.config);
    Scene scene = ds.scenes[0];
    if (zero_image) {
      std::fill(scene.pixels.begin(), scene.pixels.end(), 0);
      scene.annotations.clear();
    }
    ParamStore store;
    const Detector model = build_detector(store, cfg.model, 0);
    store.assign(load_checkpoint(checkpoint));
    const fs::path dir = prepare_dir(common.out);
    save_config(cfg, dir);

    NoGradGuard no_grad;
    EncoderTrace trace;
    const ModelOutput out = model.forward(image_tensor(scene), true, &trace);
    const DDFTrace& t = trace.s2_junction;
    const DDFParams& p = *model.encoder().ddf("td2");
    write_pgm((dir / "x_conv_abs.pgm").string(), channel_mean(t.x_conv_abs));
    write_pgm((dir / "frequency.pgm").string(), channel_mean(t.frequency));
    write_pgm((dir / "x_out.pgm").string(), channel_mean(t.x_out));

    const Tensor a = p.freq_a(t.x_conv_abs), b = p.freq_b(t.x_conv_abs);
    const Tensor spec = gated_spectrum(a, b);  // [2, C, P, Q]
    const int c = spec.dim(1), pp = spec.dim(2), qq = spec.dim(3);
    RowMatrix mag = RowMatrix::Zero(pp, qq);
    const std::size_t plane = std::size_t(c) * pp * qq;
    for (int k = 0; k < c; ++k)
      for (int y = 0; y < pp; ++y)
        for (int x = 0; x < qq; ++x) {
          const std::size_t i = (std::size_t(k) * pp + y) * qq + x;
          // Shift the zero frequency to the center for viewing.
          mag((y + pp / 2) % pp, (x + qq / 2) % qq) += std::hypot(spec.at(i), spec.at(plane + i)) / c;
        }
    write_pgm((dir / "spectrum_log_magnitude.pgm").string(), mag.array().log1p().matrix());

    const Array literal = frequency_pathway(a, b, FreqMode::kLiteral).value();
    const Array gated = frequency_pathway(a, b, FreqMode::kGated).value();
    const Array identity = (a.value() * b.value()).abs();
    std::printf("literal mode: max |pathway - |A*B|| = %.3e (transform pair acts as identity)\n",
                (literal - identity).abs().maxCoeff());
    std::printf("literal vs gated: |delta| = %.6e, relative %.6e\n", (literal - gated).matrix().norm(),
                (literal - gated).matrix().norm() / std::max(1e-300, literal.matrix().norm()));
    for (const char* name : {"x_conv_abs", "frequency", "x_out"}) {
      const Tensor& m = std::string(name) == "x_conv_abs" ? t.x_conv_abs : std::string(name) == "frequency" ? t.frequency : t.x_out;
      std::printf("  %-10s range %.6e\n", name, m.value().maxCoeff() - m.value().minCoeff());
    }

    // Cross-attention of the final decoder layer.
    const RowMatrix& attn = out.cross_attention;
    std::vector<std::array<double, 2>> positions;
    for (const auto& [h, w] : out.level_shapes) {
      const auto g = grid_positions(h, w);
      positions.insert(positions.end(), g.begin(), g.end());
    }
    const auto [h0, w0] = out.level_shapes[0];
    for (int q = 0; q < std::min<int>(queries_to_dump, int(attn.rows())); ++q) {
      write_pgm((dir / ("attention_q" + std::to_string(q) + ".pgm")).string(),
                Eigen::Map<const RowMatrix>(attn.row(q).data(), h0, w0));
    }
    const RowMatrix mean_attn = attn.colwise().mean();
    write_pgm((dir / "attention_mean.pgm").string(), Eigen::Map<const RowMatrix>(mean_attn.data(), h0, w0));
    std::vector<bool> inside(positions.size(), false);
    int inside_count = 0;
    for (std::size_t i = 0; i < positions.size(); ++i) {
      for (const Annotation& g : scene.annotations) {
        if (std::abs(positions[i][0] - g.box.cx) <= g.box.w / 2 && std::abs(positions[i][1] - g.box.cy) <= g.box.h / 2)
          inside[i] = true;
      }
      inside_count += inside[i];
    }
    if (inside_count == 0) {
      std::printf("attention on objects: n/a (no object covers a token center)\n");
    } else {
      double mass = 0;
      for (Eigen::Index q = 0; q < attn.rows(); ++q)
        for (std::size_t i = 0; i < positions.size(); ++i)
          if (inside[i]) mass += attn(q, Eigen::Index(i));
      mass /= double(attn.rows());
      const double uniform = double(inside_count) / double(positions.size());
      std::printf("attention on objects: mass %.4f vs uniform %.4f, ratio %.3f\n", mass, uniform, mass / uniform);
    }
    std::printf("maps written to %s\n", dir.string().c_str());
    return 0;
  }
};

struct BenchIou {
  Common common;
  long pairs = 1000000;
  int run() const {
    RunConfig cfg = common.resolve();
    common.finish(cfg);
    if (pairs <= 0) throw UsageError("--pairs must be positive");
    Rng rng(cfg.train.seed);
    std::vector<BoxD> a(pairs), b(pairs);
    for (long i = 0; i < pairs; ++i) {
      a[i] = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.01, 0.3), rng.uniform(0.01, 0.3)};
      b[i] = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.01, 0.3), rng.uniform(0.01, 0.3)};
    }
    const ExpandParams ep{cfg.model.alpha2};
    SIoUParams sp;
    sp.theta = cfg.model.theta;
    const std::vector<std::pair<std::string, std::function<double(const BoxD&, const BoxD&)>>> fns = {
        {"iou", [](const BoxD& x, const BoxD& y) { return iou(x, y); }},
        {"expanded_iou", [&](const BoxD& x, const BoxD& y) { return expanded_iou(x, y, ep); }},
        {"siou", [&](const BoxD& x, const BoxD& y) { return siou(x, y, sp); }},
        {"expanded_siou", [&](const BoxD& x, const BoxD& y) { return expanded_siou(x, y, ep, sp); }}};
    std::ostringstream table;
    table << "| function | pairs | total ms | ns/pair | checksum |\n| --- | --- | --- | --- | --- |\n";
    for (const auto& [name, f] : fns) {
      const auto t0 = std::chrono::steady_clock::now();
      double acc = 0;
      for (long i = 0; i < pairs; ++i) acc += f(a[i], b[i]);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      char line[160];
      std::snprintf(line, sizeof line, "| %s | %ld | %.1f | %.1f | %.6f |\n", name.c_str(), pairs, ms, ms * 1e6 / pairs,
                    acc / pairs);
      table << line;
    }
    std::printf("%s", table.str().c_str());
    if (!common.out.empty()) {
      const fs::path dir = prepare_dir(common.out);
      save_config(cfg, dir);
      write_text(dir / "bench_iou.md", table.str());
    }
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Small-object detection transformer at desk scale"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sodetr 1.0");

  GenData gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a synthetic scene dataset (JSON lines)");
  gen.common.add(c_gen);
  c_gen->get_option("--out")->description("Dataset file to write");
  c_gen->add_option("--n", gen.n, "Number of scenes (default scene.count)");

  Train tr;
  auto* c_train = app.add_subcommand("train", "Train a detector; --ablation runs the selection x encoder grid");
  tr.common.add(c_train);
  c_train->add_option("--data", tr.data, "Dataset file (generated from [scene] when omitted)");
  c_train->add_flag("--ablation", tr.ablation, "Run all four (query select, encoder) arms");
  c_train->add_flag("--no-eiou-select", tr.no_eiou, "Plain IoU in query-selection targets");
  c_train->add_flag("--no-ddf", tr.no_ddf, "Reduced fusion blocks instead of dual-domain fusion");
  c_train->add_flag("--teacher", tr.teacher, "Train the teacher architecture (kd.teacher_*)");
  c_train->add_option("--seeds", tr.seeds, "Comma-separated seeds for --ablation");

  Distill ds;
  auto* c_distill = app.add_subcommand("distill", "Train a student against a frozen teacher");
  ds.common.add(c_distill);
  c_distill->add_option("--data", ds.data, "Dataset file (generated from [scene] when omitted)");
  c_distill->add_option("--teacher", ds.teacher_ckpt, "Teacher checkpoint");
  c_distill->add_option("--replay", ds.replay, "Teacher replay file");
  c_distill->add_option("--write-replay", ds.write_replay_path, "Record the teacher outputs to this file");
  c_distill->add_option("--schedule", ds.schedule, "KD weight schedule")
      ->check(CLI::IsMember({"constant", "cosine", "linear"}));
  c_distill->add_option("--kd-iou", ds.kd_iou, "IoU variant of the KD box term")
      ->check(CLI::IsMember({"giou", "expanded-siou"}));
  c_distill->add_flag("--grid", ds.grid, "Run the undistilled student and all six schedule x IoU arms");
  c_distill->add_option("--seeds", ds.seeds, "Comma-separated seeds for --grid");

  Eval ev;
  auto* c_eval = app.add_subcommand("eval", "COCO-style metrics for a checkpoint or a detections file");
  ev.common.add(c_eval);
  c_eval->add_option("--data", ev.data, "Dataset file (generated from [scene] when omitted)");
  c_eval->add_option("--checkpoint", ev.checkpoint, "Model checkpoint");
  c_eval->add_option("--detections", ev.detections, "Detections file (JSON lines)");
  c_eval->add_option("--split", ev.split, "train, val or all")->check(CLI::IsMember({"train", "val", "all"}));

  DemoDdf demo;
  auto* c_demo = app.add_subcommand("demo-ddf", "Dump dual-domain fusion maps and decoder attention as PGM");
  demo.common.add(c_demo);
  c_demo->add_option("--checkpoint", demo.checkpoint, "Model checkpoint");
  c_demo->add_option("--data", demo.data, "Dataset file (a scene is generated when omitted)");
  c_demo->add_option("--index", demo.index, "Scene index");
  c_demo->add_flag("--zero-image", demo.zero_image, "Replace the image by zeros");
  c_demo->add_option("--queries", demo.queries_to_dump, "Attention maps to write");

  BenchIou bench;
  auto* c_bench = app.add_subcommand("bench-iou", "Time the box-overlap functions");
  bench.common.add(c_bench, false);
  c_bench->add_option("--pairs", bench.pairs, "Random box pairs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (c_gen->parsed()) return gen.run();
    if (c_train->parsed()) return tr.run();
    if (c_distill->parsed()) return ds.run();
    if (c_eval->parsed()) return ev.run();
    if (c_demo->parsed()) return demo.run();
    if (c_bench->parsed()) return bench.run();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
