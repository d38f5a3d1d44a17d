#include <cmath>

#include "doctest.h"

#include "airsplat/scene_gen.hpp"
#include "airsplat/trainer.hpp"

using namespace airsplat;

namespace {

Scene small_scene(uint64_t seed, int size = 12, int views = 3, int targets = 2,
                  double floaters = 0.05) {
  SceneConfig cfg;
  cfg.width = size;
  cfg.height = size;
  cfg.context_views = views;
  cfg.target_views = targets;
  cfg.floater_fraction = floaters;
  cfg.strict_floaters = false;
  return generate_scene(cfg, seed);
}

DriftModel small_drift() {
  DriftModel drift;
  drift.systematic.omega = {0.004, 0.017, -0.006};
  drift.systematic.v = {0.05, 0.01, -0.03};
  return drift;
}

TrainConfig fd_config(TrainMode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.lambda_s = 0.0;  // below the SSIM window on tiny images
  return cfg;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("zero ROM weights make the full-mode total equal the SCPA term") {
  const Scene scene = small_scene(1);
  const PrimitiveSoA soa = flatten(scene);
  TrainConfig cfg = fd_config(TrainMode::kFull);
  cfg.lambda_geo = 0.0;
  cfg.lambda_opa = 0.0;
  const LossBreakdown full = total_loss(scene, soa, small_drift(), TeacherNoise{}, cfg);
  TrainConfig scpa_cfg = fd_config(TrainMode::kScpaOnly);
  const LossBreakdown scpa = total_loss(scene, soa, small_drift(), TeacherNoise{}, scpa_cfg);
  CHECK(full.total == scpa.total);
  CHECK(full.total == full.rec);
}

TEST_CASE("component breakdown sums to the total") {
  const Scene scene = small_scene(2);
  const PrimitiveSoA soa = flatten(scene);
  for (TrainMode mode : all_modes()) {
    TrainConfig cfg = fd_config(mode);
    cfg.lambda_geo = 0.07;
    cfg.lambda_opa = 0.9;
    const LossBreakdown b = total_loss(scene, soa, small_drift(), TeacherNoise{}, cfg);
    CHECK(b.total ==
          doctest::Approx(b.rec + cfg.lambda_geo * b.geo + cfg.lambda_opa * b.opa)
              .epsilon(1e-12));
    CHECK(b.rec == doctest::Approx(b.rec_mse + b.rec_perc).epsilon(1e-12));
  }
}

TEST_CASE("steps=0 reports the initial evaluation and leaves buffers untouched") {
  const Scene scene = small_scene(3);
  TrainConfig cfg = fd_config(TrainMode::kContextTarget);
  cfg.steps = 0;
  const TrainReport rep = train(scene, small_drift(), TeacherNoise{}, cfg);
  CHECK(rep.steps.empty());
  REQUIRE_FALSE(rep.final_eval.per_target.empty());
  // Final SoA equals the scene's initial parameters (up to the logit/sigmoid
  // roundtrip, which is exact to ~1e-15).
  const PrimitiveSoA init = flatten(scene);
  for (std::size_t i = 0; i < init.opacity.size(); ++i)
    CHECK(rep.final_soa.opacity[i] == doctest::Approx(init.opacity[i]).epsilon(1e-12));
  CHECK(rep.final_soa.mean == init.mean);
}

TEST_CASE("identical seeds give byte-identical CSV streams") {
  const Scene scene = small_scene(4);
  TrainConfig cfg = fd_config(TrainMode::kFull);
  cfg.steps = 8;
  cfg.eval_interval = 4;
  const TrainReport a = train(scene, small_drift(), TeacherNoise{}, cfg);
  const TrainReport b = train(scene, small_drift(), TeacherNoise{}, cfg);
  CHECK(a.csv == b.csv);
}

TEST_CASE("baseline mode never updates parameters") {
  const Scene scene = small_scene(5);
  TrainConfig cfg = fd_config(TrainMode::kBaseline);
  cfg.steps = 6;
  const TrainReport rep = train(scene, small_drift(), TeacherNoise{}, cfg);
  const PrimitiveSoA init = flatten(scene);
  CHECK(rep.final_soa.mean == init.mean);
  CHECK(rep.final_soa.color == init.color);
  for (std::size_t s = 1; s < rep.steps.size(); ++s)
    CHECK(rep.steps[s].loss.total == rep.steps[0].loss.total);
}

TEST_CASE("non-finite losses abort with the offending step recorded") {
  const Scene scene = small_scene(6);
  TrainConfig cfg = fd_config(TrainMode::kContextTarget);
  cfg.steps = 5;
  cfg.debug_nan_at_step = 3;
  try {
    train(scene, small_drift(), TeacherNoise{}, cfg);
    FAIL("expected NonFiniteLossError");
  } catch (const NonFiniteLossError& e) {
    CHECK(e.step == 3);
  }
}

TEST_CASE("gradient check passes across modes on small scenes") {
  int done = 0;
  for (TrainMode mode : {TrainMode::kContextOnly, TrainMode::kScpaOnly, TrainMode::kFull}) {
    const Scene scene = small_scene(7 + static_cast<uint64_t>(done), 10, 3, 2, 0.05);
    TeacherNoise teacher;
    teacher.sigma_mean = 0.005;
    teacher.seed = 17;
    const GradCheckReport rep =
        grad_check(scene, small_drift(), teacher, fd_config(mode), 1e-4, 10, 31);
    CHECK(rep.n_trials == 10);
    CHECK(rep.max_rel_err < 1e-3);
    ++done;
  }
}

TEST_CASE("gradient check catches a deliberately negated opacity gradient") {
  TrainConfig cfg = fd_config(TrainMode::kRomOnly);
  romdebug::set_negate_opa_grad(true);
  bool detected = false;
  for (uint64_t attempt = 0; attempt < 10 && !detected; ++attempt) {
    const Scene scene = small_scene(11 + attempt, 10, 4, 2, 0.4);
    const GradCheckReport rep =
        grad_check(scene, DriftModel{}, TeacherNoise{}, cfg, 1e-4, 24, 5 + attempt);
    detected = rep.max_rel_err > 1e-3;
  }
  romdebug::set_negate_opa_grad(false);
  CHECK(detected);
}

TEST_CASE("halving h shrinks the finite-difference error superlinearly") {
  // Central differences have O(h^2) error on smooth coordinates. Colors enter
  // the loss exactly quadratically (zero FD error), so only mean coordinates
  // carry measurable third-order curvature through the Gaussian weights.
  const Scene scene = small_scene(12, 10, 3, 2, 0.0);
  TeacherNoise teacher;
  const TrainConfig cfg = fd_config(TrainMode::kContextTarget);
  const DriftModel drift = small_drift();
  PrimitiveSoA soa = flatten(scene);
  ParamGrads grads;
  uint64_t base_digest = 0;
  total_loss(scene, soa, drift, teacher, cfg, &grads, &base_digest);

  auto fd_at = [&](std::size_t idx, double h, bool& clean) {
    const double saved = soa.mean[idx];
    uint64_t dp = 0, dm = 0;
    soa.mean[idx] = saved + h;
    const double lp = total_loss(scene, soa, drift, teacher, cfg, nullptr, &dp).total;
    soa.mean[idx] = saved - h;
    const double lm = total_loss(scene, soa, drift, teacher, cfg, nullptr, &dm).total;
    soa.mean[idx] = saved;
    clean = dp == base_digest && dm == base_digest;
    return (lp - lm) / (2 * h);
  };

  SeqRng rng(7);
  std::vector<double> ratios;
  for (int trial = 0; trial < 400 && ratios.size() < 10; ++trial) {
    const std::size_t idx = rng.below(soa.mean.size());
    bool clean_coarse = false, clean_fine = false;
    const double fd_coarse = fd_at(idx, 4e-3, clean_coarse);
    const double fd_fine = fd_at(idx, 2e-3, clean_fine);
    if (!clean_coarse || !clean_fine) continue;
    const double ec = std::abs(fd_coarse - grads.d_mean[idx]);
    const double ef = std::abs(fd_fine - grads.d_mean[idx]);
    if (ec < 1e-13 || ef < 1e-14) continue;  // below the numeric noise floor
    ratios.push_back(ec / ef);
  }
  REQUIRE(ratios.size() >= 4);
  std::sort(ratios.begin(), ratios.end());
  const double median = ratios[ratios.size() / 2];
  CHECK(median > 2.0);  // better than linear; ~4 expected for h^2 scaling
}

TEST_CASE("training reduces the loss on a drift-free clean scene") {
  const Scene scene = small_scene(13, 16, 3, 2, 0.0);
  TrainConfig cfg;
  cfg.mode = TrainMode::kFull;
  cfg.steps = 60;
  cfg.lambda_s = 0.1;
  cfg.eval_interval = 30;
  const TrainReport rep = train(scene, DriftModel{}, TeacherNoise{}, cfg);
  CHECK(rep.steps.back().loss.total < rep.steps.front().loss.total);
  CHECK(rep.final_eval.mean_psnr > 30.0);
}

TEST_CASE("full mode on the default scene: monotone trend and floater pruning") {
  // Long-running: the shipped default configuration, one full-mode run.
  SceneConfig sc;
  sc.width = sc.height = 48;
  sc.context_views = 6;
  sc.target_views = 3;
  sc.floater_fraction = 0.05;
  const Scene scene = generate_scene(sc, 1);
  DriftModel drift;
  drift.systematic.omega = {0.0085059, 0.0340236, -0.0068047};
  drift.systematic.v = {0.1352995, 0.0202949, -0.0811797};
  TrainConfig cfg;
  cfg.mode = TrainMode::kFull;
  cfg.steps = 2000;
  cfg.eval_interval = 1000;
  const TrainReport rep = train(scene, drift, TeacherNoise{}, cfg);

  // Smoothed (window 50) total loss non-increasing, <= 5 violating windows.
  std::vector<double> smooth;
  double acc = 0;
  for (std::size_t i = 0; i < rep.steps.size(); ++i) {
    acc += rep.steps[i].loss.total;
    if (i >= 50) acc -= rep.steps[i - 50].loss.total;
    if (i >= 49) smooth.push_back(acc / 50.0);
  }
  int violations = 0;
  for (std::size_t i = 50; i < smooth.size(); i += 50)
    if (smooth[i] > smooth[i - 50] * (1.0 + 1e-9)) ++violations;
  CHECK(violations <= 5);

  // ROM pruning holds in full mode too.
  CHECK(rep.steps.back().alpha_floater_mean < 0.05);
  CHECK(rep.steps.back().alpha_inlier_mean >= 0.5);
}

TEST_CASE("mode names round-trip") {
  for (TrainMode m : all_modes()) {
    const auto parsed = parse_mode(mode_name(m));
    REQUIRE(parsed.has_value());
    CHECK(*parsed == m);
  }
  CHECK_FALSE(parse_mode("sauna").has_value());
}

TEST_CASE("lambda_s on sub-window images is rejected up front") {
  const Scene scene = small_scene(14, 8, 2, 1, 0.0);
  TrainConfig cfg;
  cfg.mode = TrainMode::kContextTarget;
  cfg.lambda_s = 0.1;
  CHECK_THROWS_AS(cfg.validate(scene), ConfigError);
  cfg.lambda_s = 0.0;
  CHECK_NOTHROW(cfg.validate(scene));
}

}  // TEST_SUITE
