// airsplat command-line harness: scene generation, training, ablations,
// rendering, gradient checks and the verification suite.
//
// Exit codes: 0 success, 2 configuration error, 3 non-finite numerics.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "airsplat/kernels.hpp"
#include "airsplat/scene_gen.hpp"
#include "airsplat/serial.hpp"
#include "airsplat/trainer.hpp"
#include "airsplat/verify.hpp"

namespace fs = std::filesystem;
using namespace airsplat;

namespace {

struct GlobalFlags {
  int threads = 0;          // 0 = leave default (env var or hardware)
  std::string simd = "";    // "", "auto", "scalar", "avx2"
  uint64_t seed = 0;
  bool seed_set = false;
};

void apply_globals(const GlobalFlags& g) {
  if (g.threads > 0) set_thread_count(g.threads);
  if (!g.simd.empty() && !kernels::select_backend(g.simd))
    throw ConfigError("unsupported SIMD backend: " + g.simd);
}

ExperimentConfig load_experiment(const std::string& path, const GlobalFlags& g) {
  Json j = load_json(path);
  if (g.seed_set) j["seed"] = g.seed;
  return experiment_from_json(j);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  out << text;
}

Scene make_scene(const ExperimentConfig& cfg) {
  return generate_scene(cfg.scene, cfg.scene_seed);
}

Json summary_json(const ExperimentConfig& cfg, const TrainReport& report) {
  Json j;
  j["mode"] = mode_name(cfg.train.mode);
  j["steps"] = cfg.train.steps;
  Json losses;
  if (!report.steps.empty()) {
    const LossBreakdown& last = report.steps.back().loss;
    losses["loss_total"] = last.total;
    losses["loss_rec"] = last.rec;
    losses["loss_rec_mse"] = last.rec_mse;
    losses["loss_rec_perc"] = last.rec_perc;
    losses["loss_geo"] = last.geo;
    losses["loss_opa"] = last.opa;
    j["final_alpha_floater_mean"] = report.steps.back().alpha_floater_mean;
    j["final_alpha_inlier_mean"] = report.steps.back().alpha_inlier_mean;
  }
  j["final_losses"] = losses;
  Json targets = Json::array();
  for (const MetricReport& m : report.final_eval.per_target)
    targets.push_back({{"psnr", m.psnr}, {"ssim", m.ssim}});
  j["final_per_target"] = targets;
  j["final_mean_psnr"] = report.final_eval.mean_psnr;
  j["final_mean_ssim"] = report.final_eval.mean_ssim;
  return j;
}

void write_run_outputs(const ExperimentConfig& cfg, const Scene& scene,
                       const TrainReport& report, const std::string& dir) {
  fs::create_directories(dir);
  write_text(dir + "/metrics.csv", report.csv);
  save_json(summary_json(cfg, report), dir + "/summary.json");

  // Final state as a reloadable scene file.
  Scene final_scene = scene;
  const int hw = report.final_soa.height * report.final_soa.width;
  for (int v = 0; v < report.final_soa.views; ++v)
    for (int i = 0; i < hw; ++i) {
      const int flat = v * hw + i;
      GaussianPrimitive& p = final_scene.maps[static_cast<std::size_t>(v)]
                                 .prims[static_cast<std::size_t>(i)];
      p.mean = report.final_soa.mean_at(flat);
      p.opacity = report.final_soa.opacity[static_cast<std::size_t>(flat)];
      Vec3 c = report.final_soa.color_at(flat);
      p.color = c;
    }
  save_json(scene_to_json(final_scene, cfg.scene, cfg.scene_seed), dir + "/final_scene.json");

  for (std::size_t t = 0; t < report.final_renders.size(); ++t)
    write_ppm(report.final_renders[t], dir + "/final_target_" + std::to_string(t) + ".ppm");
  for (std::size_t v = 0; v < report.final_ratings.size(); ++v)
    write_pgm(report.final_ratings[v], report.final_soa.height, report.final_soa.width,
              dir + "/rating_view_" + std::to_string(v) + ".pgm");
}

int cmd_gen_scene(const std::string& config_path, const std::string& out_path,
                  const GlobalFlags& g) {
  const ExperimentConfig cfg = load_experiment(config_path, g);
  const Scene scene = make_scene(cfg);
  save_json(scene_to_json(scene, cfg.scene, cfg.scene_seed), out_path);
  std::printf("wrote %s (%d context views, %d targets, %dx%d)\n", out_path.c_str(),
              scene.view_count(), scene.target_count(), cfg.scene.width, cfg.scene.height);
  return 0;
}

int cmd_render(const std::string& scene_path, const std::string& out_dir,
               bool debug_json, const GlobalFlags& g) {
  apply_globals(g);
  const Scene scene = scene_from_json(load_json(scene_path));
  const PrimitiveSoA soa = flatten(scene);
  fs::create_directories(out_dir);
  RenderConfig rc;
  for (int t = 0; t < scene.target_count(); ++t) {
    const RenderTarget rt = render(soa, scene.target_cameras[static_cast<std::size_t>(t)], rc);
    write_ppm(rt.color, out_dir + "/target_" + std::to_string(t) + ".ppm");
    if (debug_json)
      save_json(render_target_debug_json(rt),
                out_dir + "/target_" + std::to_string(t) + "_debug.json");
  }
  for (int v = 0; v < scene.view_count(); ++v) {
    const RenderTarget rt = render(soa, scene.context_cameras[static_cast<std::size_t>(v)], rc);
    write_ppm(rt.color, out_dir + "/context_" + std::to_string(v) + ".ppm");
  }
  std::printf("rendered %d target and %d context views into %s\n", scene.target_count(),
              scene.view_count(), out_dir.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_override,
              int steps_override, const GlobalFlags& g) {
  ExperimentConfig cfg = load_experiment(config_path, g);
  if (steps_override >= 0) cfg.train.steps = steps_override;
  apply_globals(g);
  const Scene scene = make_scene(cfg);
  const std::string dir = out_override.empty() ? cfg.output_dir : out_override;
  fs::create_directories(dir);
  save_json(scene_to_json(scene, cfg.scene, cfg.scene_seed), dir + "/scene.json");
  const TrainReport report = train(scene, cfg.drift, cfg.teacher, cfg.train);
  write_run_outputs(cfg, scene, report, dir);
  std::printf("%s: %d steps, final mean PSNR %.3f dB, SSIM %.4f -> %s\n",
              mode_name(cfg.train.mode), cfg.train.steps, report.final_eval.mean_psnr,
              report.final_eval.mean_ssim, dir.c_str());
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_override,
               int steps_override, const GlobalFlags& g) {
  ExperimentConfig cfg = load_experiment(config_path, g);
  if (steps_override >= 0) cfg.train.steps = steps_override;
  apply_globals(g);
  const Scene scene = make_scene(cfg);
  const std::string dir = out_override.empty() ? cfg.output_dir : out_override;
  fs::create_directories(dir);
  save_json(scene_to_json(scene, cfg.scene, cfg.scene_seed), dir + "/scene.json");

  std::string csv = "mode,psnr,ssim,status\n";
  std::string md = "| mode | PSNR (dB) | SSIM |\n|---|---|---|\n";
  bool any_failed = false;
  for (TrainMode mode : all_modes()) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.train.mode = mode;
    std::string status = "ok";
    double p = 0, s = 0;
    try {
      const TrainReport report = train(scene, run_cfg.drift, run_cfg.teacher, run_cfg.train);
      p = report.final_eval.mean_psnr;
      s = report.final_eval.mean_ssim;
      write_run_outputs(run_cfg, scene, report, dir + "/" + mode_name(mode));
    } catch (const std::exception& e) {
      status = std::string("failed: ") + e.what();
      any_failed = true;
    }
    csv += std::string(mode_name(mode)) + "," + fmt_g9(p) + "," + fmt_g9(s) + "," + status + "\n";
    char row[160];
    std::snprintf(row, sizeof(row), "| %s | %.3f | %.4f |\n", mode_name(mode), p, s);
    md += row;
    std::printf("%-15s psnr %8.3f  ssim %.4f  %s\n", mode_name(mode), p, s, status.c_str());
  }
  write_text(dir + "/ablation.csv", csv);
  write_text(dir + "/ablation.md", md);
  return any_failed ? 1 : 0;
}

int cmd_grad_check(const std::string& config_path, double h, int trials,
                   const GlobalFlags& g) {
  ExperimentConfig cfg = load_experiment(config_path, g);
  apply_globals(g);
  const Scene scene = make_scene(cfg);
  const GradCheckReport rep =
      grad_check(scene, cfg.drift, cfg.teacher, cfg.train, h, trials, cfg.train.seed);
  std::printf("grad-check: %d trials, max rel err %.3e, median %.3e, resampled %d\n",
              rep.n_trials, rep.max_rel_err, rep.median_rel_err, rep.resampled);
  return rep.max_rel_err < 1e-3 ? 0 : 1;
}

int cmd_verify(bool quick, const std::string& mutate, const GlobalFlags& g) {
  apply_globals(g);
  VerifyOptions opts;
  opts.quick = quick;
  if (mutate == "opa-grad-sign")
    opts.mutate_opa_grad = true;
  else if (!mutate.empty())
    throw ConfigError("unknown mutation: " + mutate);
  const auto results = run_verification(opts);
  for (const auto& r : results)
    std::printf("[%s] %-28s (%.2fs) %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.seconds, r.detail.c_str());
  return all_passed(results) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"airsplat: pose-drift-corrected Gaussian splatting laboratory"};
  app.require_subcommand(1);

  GlobalFlags g;
  app.add_option("--threads", g.threads,
                 "worker threads (default: AIRSPLAT_LAB_THREADS or hardware)");
  app.add_option("--simd", g.simd, "kernel backend: auto|scalar|avx2");
  auto* seed_opt = app.add_option("--seed", g.seed, "override the master seed");

  std::string config_path, out_path = "", scene_path, mutate = "";
  int steps_override = -1, trials = 24;
  double fd_h = 1e-4;
  bool quick = false, debug_json = false;

  auto* gen = app.add_subcommand("gen-scene", "generate a synthetic scene file");
  gen->add_option("--config", config_path, "experiment config JSON")->required();
  gen->add_option("--out", out_path, "output scene JSON")->required();

  auto* rnd = app.add_subcommand("render", "render all views of a scene file");
  rnd->add_option("--scene", scene_path, "scene JSON")->required();
  rnd->add_option("--out", out_path, "output directory")->required();
  rnd->add_flag("--debug-json", debug_json, "dump RenderTarget debug JSON per target");

  auto* trn = app.add_subcommand("train", "optimize a scene under one mode");
  trn->add_option("--config", config_path, "experiment config JSON")->required();
  trn->add_option("--out", out_path, "output directory (default from config)");
  trn->add_option("--steps", steps_override, "override train.steps");

  auto* abl = app.add_subcommand("ablate", "run all six modes on a shared scene");
  abl->add_option("--config", config_path, "experiment config JSON")->required();
  abl->add_option("--out", out_path, "output directory (default from config)");
  abl->add_option("--steps", steps_override, "override train.steps");

  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient check");
  gc->add_option("--config", config_path, "experiment config JSON")->required();
  gc->add_option("--fd-step", fd_h, "central-difference step");
  gc->add_option("--trials", trials, "number of coordinates");

  auto* ver = app.add_subcommand("verify", "run the property/gradient suite");
  ver->add_flag("--quick", quick, "reduced trial counts (< 60 s)");
  ver->add_option("--mutate", mutate, "inject a deliberate bug (opa-grad-sign)");

  CLI11_PARSE(app, argc, argv);
  g.seed_set = seed_opt->count() > 0;

  try {
    if (gen->parsed()) return cmd_gen_scene(config_path, out_path, g);
    if (rnd->parsed()) return cmd_render(scene_path, out_path, debug_json, g);
    if (trn->parsed()) return cmd_train(config_path, out_path, steps_override, g);
    if (abl->parsed()) return cmd_ablate(config_path, out_path, steps_override, g);
    if (gc->parsed()) return cmd_grad_check(config_path, fd_h, trials, g);
    if (ver->parsed()) return cmd_verify(quick, mutate, g);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NonFiniteLossError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
