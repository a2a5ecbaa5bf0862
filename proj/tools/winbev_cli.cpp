// SPDX-License-Identifier: Apache-2.0
// Command-line front end: synth, encode, train, eval, infer, complexity, selftest.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "winbev/errors.hpp"
#include "winbev/harness/artifacts.hpp"
#include "winbev/harness/checkpoint.hpp"
#include "winbev/harness/config.hpp"
#include "winbev/harness/evaluate.hpp"
#include "winbev/harness/model.hpp"
#include "winbev/harness/selftest.hpp"
#include "winbev/harness/train.hpp"
#include "winbev/spcn/complexity.hpp"

namespace fs = std::filesystem;
using namespace winbev;

namespace {

struct Common {
  std::string config_path;
  std::string preset = "default";
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::size_t> scenes;
  std::optional<std::size_t> steps;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, Common& c, bool training) {
  cmd->add_option("--config", c.config_path, "key = value config file applied over the preset");
  cmd->add_option("--preset", c.preset, "base settings")->check(CLI::IsMember({"default", "toy"}));
  cmd->add_option("--seed", c.seed, "overrides run.seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--scenes", c.scenes, "overrides scenes.count");
  if (training) cmd->add_option("--steps", c.steps, "overrides train.steps");
}

PipelineConfig resolve(const Common& c) {
  PipelineConfig cfg = c.preset == "toy" ? toy_config() : PipelineConfig{};
  if (!c.config_path.empty()) cfg = load_config(c.config_path, cfg);
  if (c.seed) cfg.seed = *c.seed;
  if (c.scenes) cfg.scenes.count = *c.scenes;
  if (c.steps) cfg.train.steps = *c.steps;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const Common& c) {
  fs::create_directories(c.out);
  return c.out;
}

std::vector<Mask> masks_of(const std::vector<GroundTruthInstance>& gts) {
  std::vector<Mask> out;
  for (const auto& g : gts) out.push_back(g.footprint_mask);
  return out;
}

std::vector<Mask> masks_of(const std::vector<DetectedInstance>& dets) {
  std::vector<Mask> out;
  for (const auto& d : dets) out.push_back(d.binary_mask);
  return out;
}

std::string metric(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

void print_report(const EvalReport& r) {
  std::cout << "AP50 " << metric(r.ap50) << "  AP70 " << metric(r.ap70) << "  mAP " << metric(r.map) << "  mIoU "
            << metric(r.miou) << '\n';
}

// Evaluates the model on the scenes and writes report, counts, overlays and
// the boundary-completion summary.
EvalReport evaluate_and_emit(const Model& model, const std::vector<GeneratedScene>& scenes, const fs::path& dir,
                             const std::string& stage) {
  std::vector<std::vector<DetectedInstance>> dets;
  std::vector<std::vector<GroundTruthInstance>> gts;
  std::vector<std::string> ids;
  std::vector<VisibilityObservation> observations;
  const auto raster = model.config().raster();
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& sc = scenes[s];
    dets.push_back(infer(model, model.prepare(sc.scene.cloud)));
    gts.push_back(sc.scene.instances);
    ids.push_back(sc.id);
    write_ppm(dir / artifact_name(sc.id, stage + "_overlay", "ppm"),
              overlay_image(raster.height, raster.width, masks_of(gts.back()), masks_of(dets.back())));
    for (std::size_t i = 0; i < sc.scene.instances.size(); ++i) {
      observations.push_back({s * 1000 + i, sc.scene.observed[i], sc.scene.instances[i].footprint_mask});
    }
  }
  const auto report = evaluate(dets, gts);
  const auto boundary = boundary_completion(observations, model.config().visibility_floor);
  nlohmann::json doc = to_json(report);
  doc["boundary_completion"] = to_json(boundary);
  doc["scene_ids"] = ids;
  write_json(dir / (stage + "_report.json"), doc);
  write_counts_csv(dir / (stage + "_counts.csv"), report, ids);
  return report;
}

int cmd_synth(const Common& c) {
  const auto cfg = resolve(c);
  const auto dir = out_dir(c);
  for (const auto& s : generate_scenes(cfg, cfg.scenes.count, cfg.seed)) {
    std::ofstream(dir / artifact_name(s.id, "spec", "txt")) << format_scene_spec(s.spec);
    save_frame(dir / artifact_name(s.id, "frame", "bin"), s.scene.cloud);
    Mask truth(cfg.raster_height, cfg.raster_width), seen = truth;
    for (std::size_t i = 0; i < s.scene.instances.size(); ++i) {
      truth = mask_or(truth, s.scene.instances[i].footprint_mask);
      seen = mask_or(seen, s.scene.observed[i]);
    }
    write_pgm(dir / artifact_name(s.id, "truth", "pgm"), mask_image(truth));
    write_pgm(dir / artifact_name(s.id, "observed", "pgm"), mask_image(seen));
    std::cout << s.id << ": " << s.scene.cloud.points.size() << " points, " << s.scene.instances.size()
              << " vehicles\n";
  }
  return 0;
}

int cmd_encode(const Common& c) {
  const auto cfg = resolve(c);
  const auto dir = out_dir(c);
  Model model(cfg);
  if (!c.checkpoint.empty()) load_checkpoint(model.params(), c.checkpoint);
  for (const auto& s : generate_scenes(cfg, cfg.scenes.count, cfg.seed)) {
    const auto afn = model.afn().forward(model.prepare(s.scene.cloud));
    write_pgm(dir / artifact_name(s.id, "afn_bev", "pgm"), feature_image(afn.bev));
    const auto w = afn.gaf.weight_values();
    std::cout << s.id << ": GAF weights " << w[0] << ' ' << w[1] << ' ' << w[2] << ", consistency "
              << afn.gaf.consistency_value() << '\n';
  }
  return 0;
}

int cmd_train(const Common& c) {
  const auto cfg = resolve(c);
  const auto dir = out_dir(c);
  Model model(cfg);
  const auto scenes = generate_scenes(cfg, cfg.scenes.count, cfg.seed);
  const auto examples = training_set(model, scenes);
  const std::size_t every = std::max<std::size_t>(1, cfg.train.steps / 20);
  const auto result = train_toy(model, examples, cfg.train, [&](std::size_t step, double loss) {
    if (step % every == 0) std::cout << "step " << step << " loss " << loss << '\n' << std::flush;
  });
  std::cout << "final loss " << result.final_loss << " after " << result.seconds << " s\n";
  save_checkpoint(model.params(), dir / "model.bin");
  auto losses = result.losses;
  losses.push_back(result.final_loss);
  write_loss_csv(dir / "loss.csv", losses);
  std::ofstream(dir / "config.txt") << format_config(cfg);
  print_report(evaluate_and_emit(model, scenes, dir, "train"));
  return 0;
}

int cmd_eval(const Common& c) {
  const auto cfg = resolve(c);
  const auto dir = out_dir(c);
  Model model(cfg);
  if (!c.checkpoint.empty()) load_checkpoint(model.params(), c.checkpoint);
  print_report(evaluate_and_emit(model, generate_scenes(cfg, cfg.scenes.count, cfg.seed), dir, "eval"));
  return 0;
}

int cmd_infer(const Common& c, const std::string& frame) {
  const auto cfg = resolve(c);
  const auto dir = out_dir(c);
  Model model(cfg);
  if (!c.checkpoint.empty()) load_checkpoint(model.params(), c.checkpoint);
  const auto loaded = load_frame(frame);
  if (loaded.rejected) std::cerr << loaded.rejected << " non-finite records dropped\n";
  const std::string id = fs::path(frame).stem().string();
  const auto dets = infer(model, model.prepare(loaded.cloud));
  write_ppm(dir / artifact_name(id, "infer_overlay", "ppm"),
            overlay_image(cfg.raster_height, cfg.raster_width, {}, masks_of(dets)));
  nlohmann::json doc = nlohmann::json::array();
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto name = artifact_name(id, "det" + std::to_string(i), "pgm");
    write_pgm(dir / name, mask_image(dets[i].binary_mask));
    doc.push_back({{"query", dets[i].query}, {"class", dets[i].class_id}, {"score", dets[i].score},
                   {"area", dets[i].binary_mask.area()}, {"mask", name}});
  }
  write_json(dir / artifact_name(id, "detections", "json"), doc);
  std::cout << dets.size() << " detections\n";
  return 0;
}

int cmd_complexity(const std::string& out, std::size_t h, std::size_t w, std::size_t m, std::size_t d,
                   bool measure, std::uint64_t seed) {
  fs::create_directories(out);
  const auto r = complexity_report(h, w, m, d, measure, seed);
  std::printf("%-26s %18s\n", "quantity", "value");
  std::printf("%-26s %18zux%zu\n", "raster", r.height, r.width);
  std::printf("%-26s %18zu\n", "window M", r.window);
  std::printf("%-26s %18.0f\n", "Omega(SPCN) = HW M^2", r.omega_spcn);
  std::printf("%-26s %18.0f\n", "Omega(global) = (HW)^2", r.omega_global);
  std::printf("%-26s %18.1f\n", "analytic ratio", r.ratio);
  if (r.measured) {
    std::printf("%-26s %18llu\n", "measured window softmax", static_cast<unsigned long long>(r.measured->window_softmax));
    std::printf("%-26s %18llu\n", "measured window linear", static_cast<unsigned long long>(r.measured->window_linear));
    std::printf("%-26s %18llu\n", "measured global softmax", static_cast<unsigned long long>(r.measured->global_softmax));
    std::printf("%-26s %18.2f\n", "measured ratio", r.measured->ratio);
    write_counter_csv(fs::path(out) / "complexity_counters.csv", r.measured->records);
  }
  write_json(fs::path(out) / "complexity.json", to_json(r));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BEV perception pipeline: scenes, training, evaluation and diagnostics"};
  app.require_subcommand(1);

  Common common;
  std::string frame;
  auto* synth = app.add_subcommand("synth", "generate synthetic scenes");
  add_common(synth, common, false);
  auto* encode = app.add_subcommand("encode", "run the encoder only and emit BEV images");
  add_common(encode, common, false);
  encode->add_option("--checkpoint", common.checkpoint, "parameters to load");
  auto* train = app.add_subcommand("train", "toy training on generated scenes");
  add_common(train, common, true);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on generated scenes");
  add_common(eval, common, false);
  eval->add_option("--checkpoint", common.checkpoint, "parameters to load");
  auto* inf = app.add_subcommand("infer", "detect instances in one frame file");
  add_common(inf, common, false);
  inf->add_option("--checkpoint", common.checkpoint, "parameters to load");
  inf->add_option("--frame", frame, "packed float32 x y z r frame")->required();

  std::size_t ch = 200, cw = 200, cm = 10, cd = 4;
  bool measure = false;
  std::uint64_t cseed = 0;
  std::string cout_dir = "out";
  auto* cx = app.add_subcommand("complexity", "windowed against global attention cost table");
  cx->add_option("--height", ch);
  cx->add_option("--width", cw);
  cx->add_option("--window", cm);
  cx->add_option("--dim", cd, "feature width of the measured kernels");
  cx->add_flag("--measure", measure, "run the kernels and report counted multiplies");
  cx->add_option("--seed", cseed);
  cx->add_option("--out", cout_dir);

  std::uint64_t sseed = 0;
  std::string sout = "out";
  auto* st = app.add_subcommand("selftest", "run quick oracle checks");
  st->add_option("--seed", sseed);
  st->add_option("--out", sout, "scratch directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(common);
    if (*encode) return cmd_encode(common);
    if (*train) return cmd_train(common);
    if (*eval) return cmd_eval(common);
    if (*inf) return cmd_infer(common, frame);
    if (*cx) return cmd_complexity(cout_dir, ch, cw, cm, cd, measure, cseed);
    if (*st) {
      int failed = 0;
      for (const auto& r : run_selftest(sseed, sout)) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
        failed += !r.passed;
      }
      return failed ? 1 : 0;
    }
  } catch (const TrainingError& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
