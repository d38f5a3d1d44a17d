#include "airsplat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "airsplat/kernels.hpp"

namespace airsplat {

namespace {

uint64_t fnv_mix(uint64_t h, uint64_t x) { return (h ^ x) * 0x100000001b3ull; }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit_of(double p) {
  const double c = std::clamp(p, 1e-9, 1.0 - 1e-9);
  return std::log(c / (1.0 - c));
}

bool uses_scpa(TrainMode m) { return m == TrainMode::kScpaOnly || m == TrainMode::kFull; }
bool uses_naive_target(TrainMode m) {
  return m == TrainMode::kContextTarget || m == TrainMode::kRomOnly;
}
bool uses_context_recon(TrainMode m) {
  return m == TrainMode::kBaseline || m == TrainMode::kContextOnly;
}
bool uses_rom(TrainMode m) { return m == TrainMode::kRomOnly || m == TrainMode::kFull; }

void add_render_grad(ParamGrads& acc, const RenderGrad& g) {
  for (std::size_t i = 0; i < g.d_opacity.size(); ++i) acc.d_alpha[i] += g.d_opacity[i];
  for (std::size_t i = 0; i < g.d_color.size(); ++i) acc.d_color[i] += g.d_color[i];
  for (std::size_t i = 0; i < g.d_mean.size(); ++i) acc.d_mean[i] += g.d_mean[i];
}

}  // namespace

const char* mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kBaseline: return "baseline";
    case TrainMode::kContextOnly: return "context_only";
    case TrainMode::kContextTarget: return "context_target";
    case TrainMode::kScpaOnly: return "scpa_only";
    case TrainMode::kRomOnly: return "rom_only";
    case TrainMode::kFull: return "full";
  }
  return "unknown";
}

std::optional<TrainMode> parse_mode(const std::string& name) {
  for (TrainMode m : all_modes())
    if (name == mode_name(m)) return m;
  return std::nullopt;
}

const std::vector<TrainMode>& all_modes() {
  static const std::vector<TrainMode> modes = {
      TrainMode::kBaseline,      TrainMode::kContextOnly, TrainMode::kContextTarget,
      TrainMode::kScpaOnly,      TrainMode::kRomOnly,     TrainMode::kFull,
  };
  return modes;
}

void TrainConfig::validate(const Scene& scene) const {
  if (steps < 0) throw ConfigError("train: steps must be >= 0");
  if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be positive");
  if (lr_mean_scale < 0 || lr_color_scale < 0)
    throw ConfigError("train: lr scales must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1))
    throw ConfigError("train: adam betas must lie in [0, 1)");
  if (lambda_geo < 0 || lambda_opa < 0 || lambda_s < 0)
    throw ConfigError("train: loss weights must be >= 0");
  if (!(lambda_decay > 0) || !(tau > 0) || !(eta > 0))
    throw ConfigError("train: lambda_decay, tau, eta must be positive");
  if (eval_interval <= 0) throw ConfigError("train: eval_interval must be positive");
  if (scene.view_count() == 0) throw ConfigError("train: scene has no context views");
  if (lambda_s > 0 && !scene.target_images.empty()) {
    const Image& img = scene.target_images.front();
    if (img.height < 11 || img.width < 11)
      throw ConfigError(
          "train: lambda_s > 0 requires images of at least 11x11 (SSIM window)");
  }
  if (uses_rom(mode) && scene.view_count() < 2)
    throw InsufficientViewsError("train: ROM modes need at least 2 context views");
}

ReconConfig TrainConfig::recon() const {
  ReconConfig rc;
  rc.lambda_s = lambda_s;
  rc.render.background = background;
  rc.render.z_near = z_near;
  return rc;
}

RomParams TrainConfig::rom() const {
  RomParams rp;
  rp.eta = eta;
  rp.lambda_decay = lambda_decay;
  rp.tau = tau;
  rp.z_near = z_near;
  return rp;
}

ParamBuffers ParamBuffers::init(const PrimitiveSoA& base) {
  ParamBuffers b;
  const std::size_t n = static_cast<std::size_t>(base.n);
  b.logit.resize(n);
  for (std::size_t i = 0; i < n; ++i) b.logit[i] = logit_of(base.opacity[i]);
  b.color = base.color;
  b.mean_delta.assign(3 * n, 0.0);
  b.base_mean = base.mean;
  b.m_logit.assign(n, 0.0);
  b.v_logit.assign(n, 0.0);
  b.m_color.assign(3 * n, 0.0);
  b.v_color.assign(3 * n, 0.0);
  b.m_mean.assign(3 * n, 0.0);
  b.v_mean.assign(3 * n, 0.0);
  return b;
}

void ParamBuffers::apply(PrimitiveSoA& soa) const {
  const std::size_t n = logit.size();
  for (std::size_t i = 0; i < n; ++i) soa.opacity[i] = sigmoid(logit[i]);
  for (std::size_t i = 0; i < 3 * n; ++i) {
    soa.color[i] = std::clamp(color[i], 0.0, 1.0);
    soa.mean[i] = base_mean[i] + mean_delta[i];
  }
}

LossBreakdown total_loss(const Scene& scene, const PrimitiveSoA& soa,
                         const DriftModel& drift, const TeacherNoise& teacher,
                         const TrainConfig& cfg, ParamGrads* grads,
                         uint64_t* digest, const FrozenStopGrads* frozen,
                         FrozenStopGrads* capture) {
  LossBreakdown out;
  uint64_t dig = 0x100001b3u;
  const std::size_t n = static_cast<std::size_t>(soa.n);
  if (grads) {
    grads->d_alpha.assign(n, 0.0);
    grads->d_color.assign(3 * n, 0.0);
    grads->d_mean.assign(3 * n, 0.0);
  }
  const ReconConfig recon = cfg.recon();

  if (uses_context_recon(cfg.mode)) {
    for (int v = 0; v < scene.view_count(); ++v) {
      Camera cam = scene.context_cameras[static_cast<std::size_t>(v)];
      const RenderTarget rt = render(soa, cam, recon.render);
      const RecLossResult rec = rec_loss(rt.color, scene.context_images[static_cast<std::size_t>(v)],
                                         cfg.lambda_s, grads != nullptr);
      out.rec += rec.total;
      out.rec_mse += rec.mse_term;
      out.rec_perc += rec.perc_term;
      if (grads) add_render_grad(*grads, render_backward(rt, soa, rec.d_image));
      dig = fnv_mix(dig, rt.structure_digest());
    }
  }

  if (uses_naive_target(cfg.mode)) {
    std::vector<RigidPose> gt_poses;
    for (const Camera& c : scene.target_cameras) gt_poses.push_back(c.pose);
    const std::vector<RigidPose> pass1 = predict_poses(drift, gt_poses, 1);
    for (std::size_t t = 0; t < pass1.size(); ++t) {
      Camera cam = scene.target_cameras[t];
      cam.pose = pass1[t];
      const RenderTarget rt = render(soa, cam, recon.render);
      const RecLossResult rec =
          rec_loss(rt.color, scene.target_images[t], cfg.lambda_s, grads != nullptr);
      out.rec += rec.total;
      out.rec_mse += rec.mse_term;
      out.rec_perc += rec.perc_term;
      if (grads) add_render_grad(*grads, render_backward(rt, soa, rec.d_image));
      dig = fnv_mix(dig, rt.structure_digest());
    }
  }

  if (uses_scpa(cfg.mode)) {
    RenderGrad rg;
    const ScpaResult res = scpa_loss(scene, soa, drift, recon, grads ? &rg : nullptr);
    out.rec += res.loss_total;
    out.rec_mse += res.mse_sum;
    out.rec_perc += res.perc_sum;
    out.branch_aligned = res.aligned_count;
    out.branch_initial = res.initial_count;
    if (grads) add_render_grad(*grads, rg);
    dig = fnv_mix(dig, res.digest);
  }

  if (uses_rom(cfg.mode)) {
    const RomResult rom = rom_losses(scene, soa, teacher, cfg.rom(),
                                     frozen && frozen->has_rom ? &frozen->rom : nullptr);
    out.geo = rom.loss_geo;
    out.opa = rom.loss_opa;
    if (grads)
      for (std::size_t i = 0; i < n; ++i) {
        grads->d_alpha[i] += cfg.lambda_opa * rom.d_alpha[i];
        grads->d_mean[3 * i] += cfg.lambda_geo * rom.d_mean[3 * i];
        grads->d_mean[3 * i + 1] += cfg.lambda_geo * rom.d_mean[3 * i + 1];
        grads->d_mean[3 * i + 2] += cfg.lambda_geo * rom.d_mean[3 * i + 2];
      }
    dig = fnv_mix(dig, rom.digest);
    if (capture) {
      capture->has_rom = true;
      capture->rom = rom.make_frozen(soa);
    }
  }

  out.total = out.rec + cfg.lambda_geo * out.geo + cfg.lambda_opa * out.opa;
  if (digest) *digest = dig;
  return out;
}

EvalRecord evaluate_targets(const Scene& scene, const PrimitiveSoA& soa,
                            const TrainConfig& cfg, int step) {
  EvalRecord rec;
  rec.step = step;
  RenderConfig rc;
  rc.background = cfg.background;
  rc.z_near = cfg.z_near;
  for (std::size_t t = 0; t < scene.target_cameras.size(); ++t) {
    const RenderTarget rt = render(soa, scene.target_cameras[t], rc);
    rec.per_target.push_back(metric_report(rt.color, scene.target_images[t]));
  }
  for (const MetricReport& m : rec.per_target) {
    rec.mean_psnr += m.psnr;
    rec.mean_ssim += m.ssim;
  }
  if (!rec.per_target.empty()) {
    rec.mean_psnr /= static_cast<double>(rec.per_target.size());
    rec.mean_ssim /= static_cast<double>(rec.per_target.size());
  }
  return rec;
}

namespace {

void append_csv_row(std::string& csv, const StepRecord& r) {
  csv += std::to_string(r.step);
  for (double v : {r.loss.total, r.loss.rec, r.loss.rec_mse, r.loss.rec_perc,
                   r.loss.geo, r.loss.opa}) {
    csv += ',';
    csv += fmt_g9(v);
  }
  csv += ',' + std::to_string(r.loss.branch_aligned);
  csv += ',' + std::to_string(r.loss.branch_initial);
  csv += ',' + fmt_g9(r.alpha_floater_mean);
  csv += ',' + fmt_g9(r.alpha_inlier_mean);
  csv += '\n';
}

void alpha_means(const PrimitiveSoA& soa, double& floater_mean, double& inlier_mean) {
  double fsum = 0, isum = 0;
  std::size_t fcount = 0, icount = 0;
  for (std::size_t i = 0; i < soa.opacity.size(); ++i) {
    if (soa.floater[i]) {
      fsum += soa.opacity[i];
      ++fcount;
    } else {
      isum += soa.opacity[i];
      ++icount;
    }
  }
  floater_mean = fcount ? fsum / static_cast<double>(fcount) : 0.0;
  inlier_mean = icount ? isum / static_cast<double>(icount) : 0.0;
}

}  // namespace

TrainReport train(const Scene& scene, const DriftModel& drift,
                  const TeacherNoise& teacher, const TrainConfig& cfg) {
  cfg.validate(scene);
  drift.validate();
  teacher.validate();

  TrainReport report;
  report.csv =
      "step,loss_total,loss_rec,loss_rec_mse,loss_rec_perc,loss_geo,loss_opa,"
      "branch_aligned,branch_initial,alpha_floater_mean,alpha_inlier_mean\n";

  PrimitiveSoA soa = flatten(scene);
  ParamBuffers params = ParamBuffers::init(soa);
  const std::size_t n = static_cast<std::size_t>(soa.n);

  // Baseline never updates parameters, so its per-step losses are constant;
  // evaluate once and replicate the row.
  const bool frozen_params = cfg.mode == TrainMode::kBaseline;
  bool have_static_loss = false;
  LossBreakdown static_loss;

  ParamGrads grads;
  std::vector<double> d_logit(n), d_color(3 * n);
  for (int step = 0; step < cfg.steps; ++step) {
    params.apply(soa);

    StepRecord rec;
    rec.step = step;
    if (frozen_params) {
      if (!have_static_loss) {
        static_loss = total_loss(scene, soa, drift, teacher, cfg, nullptr);
        have_static_loss = true;
      }
      rec.loss = static_loss;
    } else {
      rec.loss = total_loss(scene, soa, drift, teacher, cfg, &grads);
    }
    if (cfg.debug_nan_at_step == step)
      rec.loss.total = std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(rec.loss.total))
      throw NonFiniteLossError(
          "train: non-finite loss at step " + std::to_string(step), step);

    alpha_means(soa, rec.alpha_floater_mean, rec.alpha_inlier_mean);
    report.steps.push_back(rec);
    append_csv_row(report.csv, rec);

    if (!frozen_params) {
      // Chain rule into the raw buffers, clamp/sigmoid aware. Gradients at
      // floating-point noise level are floored to zero: Adam's per-coordinate
      // normalization would otherwise bootstrap 1e-17-scale round-off into
      // full learning-rate steps and walk a converged scene apart.
      constexpr double kGradFloor = 1e-12;
      auto floored = [](double g) { return std::abs(g) < kGradFloor ? 0.0 : g; };
      for (std::size_t i = 0; i < n; ++i) {
        const double a = soa.opacity[i];
        d_logit[i] = floored(grads.d_alpha[i] * a * (1.0 - a));
      }
      for (std::size_t i = 0; i < 3 * n; ++i) {
        const bool inside = params.color[i] > 0.0 && params.color[i] < 1.0;
        d_color[i] = inside ? floored(grads.d_color[i]) : 0.0;
        grads.d_mean[i] = floored(grads.d_mean[i]);
      }
      ++params.adam_t;
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, params.adam_t);
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, params.adam_t);
      const auto& K = kernels::active();
      K.adam_step(params.logit.data(), d_logit.data(), params.m_logit.data(),
                  params.v_logit.data(), n, cfg.learning_rate, cfg.adam_beta1,
                  cfg.adam_beta2, cfg.adam_eps, bc1, bc2);
      K.adam_step(params.color.data(), d_color.data(), params.m_color.data(),
                  params.v_color.data(), 3 * n, cfg.learning_rate * cfg.lr_color_scale,
                  cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, bc1, bc2);
      K.adam_step(params.mean_delta.data(), grads.d_mean.data(), params.m_mean.data(),
                  params.v_mean.data(), 3 * n, cfg.learning_rate * cfg.lr_mean_scale,
                  cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, bc1, bc2);
      if (!all_finite(params.logit) || !all_finite(params.color) ||
          !all_finite(params.mean_delta))
        throw NonFiniteLossError(
            "train: non-finite parameter after step " + std::to_string(step), step);
    }

    if ((step + 1) % cfg.eval_interval == 0 && step + 1 < cfg.steps) {
      params.apply(soa);
      report.evals.push_back(evaluate_targets(scene, soa, cfg, step + 1));
    }
  }

  params.apply(soa);
  report.final_eval = evaluate_targets(scene, soa, cfg, cfg.steps);
  report.evals.push_back(report.final_eval);

  RenderConfig rc;
  rc.background = cfg.background;
  rc.z_near = cfg.z_near;
  for (const Camera& cam : scene.target_cameras)
    report.final_renders.push_back(render(soa, cam, rc).color);

  if (scene.view_count() >= 2) {
    const RomResult rom = rom_losses(scene, soa, teacher, cfg.rom());
    const int hw = soa.height * soa.width;
    for (int v = 0; v < soa.views; ++v) {
      std::vector<double> gray(static_cast<std::size_t>(hw), 0.0);
      for (int i = 0; i < hw; ++i) {
        const std::size_t flat = static_cast<std::size_t>(v * hw + i);
        gray[static_cast<std::size_t>(i)] =
            rom.field.valid[flat] ? rom.field.rating[flat] : 0.0;
      }
      report.final_ratings.push_back(std::move(gray));
    }
  }
  report.final_soa = std::move(soa);
  return report;
}

GradCheckReport grad_check(const Scene& scene, const DriftModel& drift,
                           const TeacherNoise& teacher, const TrainConfig& cfg,
                           double h, int n_trials, uint64_t seed) {
  PrimitiveSoA base = flatten(scene);
  {
    // Evaluate at the post-parameterization state the trainer sees.
    ParamBuffers params = ParamBuffers::init(base);
    params.apply(base);
  }

  ParamGrads grads;
  uint64_t base_digest = 0;
  FrozenStopGrads frozen;
  total_loss(scene, base, drift, teacher, cfg, &grads, &base_digest, nullptr, &frozen);

  GradCheckReport report;
  SeqRng rng(seed);
  const std::size_t n = static_cast<std::size_t>(base.n);
  const std::size_t coords = 7 * n;
  int attempts_left = n_trials * 120;

  auto eval_at = [&](const PrimitiveSoA& soa, uint64_t* dig) {
    return total_loss(scene, soa, drift, teacher, cfg, nullptr, dig, &frozen, nullptr)
        .total;
  };

  std::vector<double> errs;
  while (report.n_trials < n_trials && attempts_left-- > 0) {
    const std::size_t r = rng.below(coords);
    char kind;
    std::size_t idx;
    if (r < n) {
      kind = 'a';
      idx = r;
      const double a = base.opacity[idx];
      if (a < 3 * h || a > 1 - 3 * h) {
        ++report.resampled;
        continue;
      }
    } else if (r < 4 * n) {
      kind = 'c';
      idx = r - n;
      const double c = base.color[idx];
      if (c < 3 * h || c > 1 - 3 * h) {
        ++report.resampled;
        continue;
      }
    } else {
      kind = 'm';
      idx = r - 4 * n;
    }

    PrimitiveSoA probe = base;
    auto& field = kind == 'a' ? probe.opacity : (kind == 'c' ? probe.color : probe.mean);
    const double saved = field[idx];
    uint64_t dplus = 0, dminus = 0;
    field[idx] = saved + h;
    const double lp = eval_at(probe, &dplus);
    field[idx] = saved - h;
    const double lm = eval_at(probe, &dminus);
    field[idx] = saved;
    if (dplus != base_digest || dminus != base_digest) {
      ++report.resampled;
      continue;
    }

    const double fd = (lp - lm) / (2.0 * h);
    const double analytic = kind == 'a'   ? grads.d_alpha[idx]
                            : kind == 'c' ? grads.d_color[idx]
                                          : grads.d_mean[idx];
    GradCheckTrial trial;
    trial.kind = kind;
    trial.index = static_cast<int>(idx);
    trial.analytic = analytic;
    trial.fd = fd;
    if (std::abs(analytic) < 1e-8 && std::abs(fd) < 1e-8) {
      trial.rel_err = 0.0;
      ++report.zero_pairs;
    } else {
      trial.rel_err = std::abs(analytic - fd) / std::max(std::abs(analytic), std::abs(fd));
    }
    errs.push_back(trial.rel_err);
    report.trials.push_back(trial);
    ++report.n_trials;
  }

  if (!errs.empty()) {
    report.max_rel_err = *std::max_element(errs.begin(), errs.end());
    std::vector<double> sorted = errs;
    std::sort(sorted.begin(), sorted.end());
    report.median_rel_err = sorted[sorted.size() / 2];
  }
  return report;
}

}  // namespace airsplat
