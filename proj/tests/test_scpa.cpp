#include <cmath>

#include "doctest.h"

#include "airsplat/metrics.hpp"
#include "airsplat/scene_gen.hpp"
#include "airsplat/scpa.hpp"

using namespace airsplat;

namespace {

Scene make_scene(uint64_t seed, int size = 16, int views = 3, int targets = 2) {
  SceneConfig cfg;
  cfg.width = size;
  cfg.height = size;
  cfg.context_views = views;
  cfg.target_views = targets;
  return generate_scene(cfg, seed);
}

double pose_diff(const RigidPose& a, const RigidPose& b) {
  return std::max(frobenius_norm(a.rotation - b.rotation),
                  norm(a.translation - b.translation));
}

}  // namespace

TEST_SUITE("scpa") {

TEST_CASE("drift twist of identical poses is zero") {
  const RigidPose p = exp_map(Twist{{0.2, -0.1, 0.3}, {1, 2, -1}});
  const Twist xi = drift_twist(p, p);
  CHECK(norm(xi.omega) < 1e-12);
  CHECK(norm(xi.v) < 1e-12);
}

TEST_CASE("drift twist recovers the injected left increment") {
  const Twist delta{{0.05, -0.03, 0.08}, {0.2, 0.1, -0.15}};
  const RigidPose d_pose = exp_map(delta);
  const RigidPose gt = exp_map(Twist{{0.4, 0.2, -0.5}, {2, -1, 3}});
  const RigidPose p1 = compose(d_pose, gt);
  const RigidPose p2 = compose(d_pose, p1);
  const Twist xi = drift_twist(p1, p2);
  CHECK(norm(xi.omega - delta.omega) < 1e-10);
  CHECK(norm(xi.v - delta.v) < 1e-10);
}

TEST_CASE("drift twist of a pure world-frame translation") {
  const RigidPose p1 = exp_map(Twist{{0.3, 0.1, -0.2}, {1, 0, 2}});
  RigidPose p2 = p1;
  p2.translation += Vec3{0, 0, 0.1};
  const Twist xi = drift_twist(p1, p2);
  CHECK(norm(xi.omega) < 1e-12);
  CHECK(norm(xi.v - Vec3{0, 0, 0.1}) < 1e-12);
}

TEST_CASE("align_pose with a zero twist is a no-op") {
  const RigidPose p = exp_map(Twist{{0.2, 0.4, -0.3}, {1, -2, 0.5}});
  CHECK(pose_diff(align_pose(p, Twist{}), p) < 1e-15);
}

TEST_CASE("align_pose undoes repeated drift exactly") {
  const Twist delta{{0.1, 0.2, -0.05}, {0.3, -0.2, 0.1}};
  const RigidPose gt = exp_map(Twist{{-0.4, 0.25, 0.6}, {1, 2, 3}});
  const RigidPose p1 = compose(exp_map(delta), gt);
  const RigidPose p2 = compose(exp_map(delta), p1);
  const RigidPose aligned = align_pose(p1, drift_twist(p1, p2));
  const GeodesicDistance d = geodesic_distance(aligned, gt);
  CHECK(d.rot_angle < 1e-9);
  CHECK(d.trans_dist < 1e-9);
}

TEST_CASE("align_pose is definitionally exp(-xi) * p1") {
  const RigidPose p1 = exp_map(Twist{{0.15, -0.2, 0.1}, {0.4, 0.6, -0.2}});
  const RigidPose p2 = exp_map(Twist{{-0.05, 0.1, 0.2}, {0.1, -0.3, 0.5}});
  const Twist xi = drift_twist(p1, p2);
  const RigidPose aligned = align_pose(p1, xi);
  CHECK(pose_diff(compose(exp_map(xi), aligned), p1) < 1e-12);
}

TEST_CASE("rec_loss basics") {
  Image a(16, 16), b(16, 16);
  CHECK(rec_loss(a, b, 0.0).total == 0.0);
  std::fill(b.data.begin(), b.data.end(), 1.0);
  CHECK(rec_loss(a, b, 0.0).total == doctest::Approx(1.0).epsilon(1e-15));
  // With the SSIM term at the constant-image closed form.
  const double c1 = 1e-4, c2 = 9e-4;
  const double s = (c1 * c2) / ((1.0 + c1) * c2);
  const RecLossResult r = rec_loss(a, b, 0.1);
  CHECK(r.total == doctest::Approx(1.0 + 0.1 * (1.0 - s)).epsilon(1e-12));
  CHECK(r.mse_term == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.perc_term == doctest::Approx(0.1 * (1.0 - s)).epsilon(1e-12));

  Image c(16, 12);
  CHECK_THROWS_AS(rec_loss(a, c, 0.0), ShapeMismatchError);
}

TEST_CASE("rec_loss gradient matches finite differences") {
  SeqRng rng(9);
  Image a(16, 16), b(16, 16);
  for (double& v : a.data) v = rng.uniform();
  for (double& v : b.data) v = rng.uniform();
  const RecLossResult r = rec_loss(a, b, 0.1, true);
  double worst = 0;
  for (int k = 0; k < 30; ++k) {
    const std::size_t i = rng.below(a.data.size());
    const double h = 1e-5;
    Image ap = a, am = a;
    ap.data[i] += h;
    am.data[i] -= h;
    const double fd = (rec_loss(ap, b, 0.1).total - rec_loss(am, b, 0.1).total) / (2 * h);
    worst = std::max(worst, std::abs(fd - r.d_image[i]) /
                                std::max({std::abs(fd), std::abs(r.d_image[i]), 1e-8}));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("zero drift: both branches agree and equal plain reconstruction") {
  const Scene scene = make_scene(41);
  const PrimitiveSoA soa = flatten(scene);
  const DriftModel drift;  // identity, no noise
  ReconConfig recon;
  recon.lambda_s = 0.1;
  const ScpaResult res = scpa_loss(scene, soa, drift, recon);
  double direct = 0;
  for (int t = 0; t < scene.target_count(); ++t) {
    const RenderTarget rt = render(soa, scene.target_cameras[static_cast<std::size_t>(t)],
                                   recon.render);
    direct += rec_loss(rt.color, scene.target_images[static_cast<std::size_t>(t)],
                       recon.lambda_s)
                  .total;
  }
  CHECK(res.loss_total == doctest::Approx(direct).epsilon(1e-12));
  for (const auto& t : res.targets) {
    CHECK(norm(t.xi.omega) < 1e-12);
    CHECK(norm(t.xi.v) < 1e-12);
    CHECK(t.loss_aligned == doctest::Approx(t.loss_initial).epsilon(1e-12));
  }
}

TEST_CASE("systematic drift selects the aligned branch with the smaller loss") {
  const Scene scene = make_scene(42);
  const PrimitiveSoA soa = flatten(scene);
  DriftModel drift;
  drift.systematic.omega = {0.0, 2.5 * kPi / 180.0, 0.0};
  drift.systematic.v = {0.1, 0.0, -0.05};
  ReconConfig recon;
  recon.lambda_s = 0.1;
  const ScpaResult res = scpa_loss(scene, soa, drift, recon);
  for (const auto& t : res.targets) {
    CHECK(t.chosen == ScpaBranch::kAligned);
    CHECK(t.loss_aligned < t.loss_initial);
  }
  CHECK(res.aligned_count == scene.target_count());
}

TEST_CASE("per-target minimum never exceeds the initial-branch loss") {
  const Scene scene = make_scene(43);
  const PrimitiveSoA soa = flatten(scene);
  SeqRng rng(44);
  ReconConfig recon;
  recon.lambda_s = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    DriftModel drift;
    drift.systematic.omega = {0.1 * rng.uniform(), 0.1 * rng.uniform(), 0.1 * rng.uniform()};
    drift.systematic.v = {0.2 * rng.uniform(), 0.2 * rng.uniform(), 0.2 * rng.uniform()};
    drift.noise_sigma_rot = 0.3 * rng.uniform();  // possibly pathological re-prediction
    drift.noise_sigma_trans = 0.3 * rng.uniform();
    drift.seed = rng.next();
    const ScpaResult res = scpa_loss(scene, soa, drift, recon);
    double initial_sum = 0;
    for (const auto& t : res.targets) {
      CHECK(std::min(t.loss_aligned, t.loss_initial) <= t.loss_initial);
      initial_sum += t.loss_initial;
    }
    CHECK(res.loss_total <= initial_sum + 1e-12);
  }
}

TEST_CASE("near-pi relative rotation falls back to the initial branch") {
  const Scene scene = make_scene(45);
  const PrimitiveSoA soa = flatten(scene);
  std::vector<RigidPose> pass1, pass2;
  for (int t = 0; t < scene.target_count(); ++t) {
    pass1.push_back(scene.target_cameras[static_cast<std::size_t>(t)].pose);
    // pass2 differs by a 180-degree rotation: log_map must refuse.
    RigidPose flip;
    flip.rotation.m = {-1, 0, 0, 0, -1, 0, 0, 0, 1};
    pass2.push_back(compose(flip, pass1.back()));
  }
  ReconConfig recon;
  recon.lambda_s = 0.0;
  const ScpaResult res = detail::scpa_core(scene, soa, pass1, pass2, recon, nullptr);
  for (const auto& t : res.targets) {
    CHECK(t.near_pi_fallback);
    CHECK(t.chosen == ScpaBranch::kInitial);
  }
  CHECK(res.initial_count == scene.target_count());
}

TEST_CASE("loss is invariant to target ordering") {
  const Scene scene = make_scene(46, 16, 3, 3);
  const PrimitiveSoA soa = flatten(scene);
  DriftModel drift;
  drift.systematic.omega = {0.01, 0.03, -0.02};
  drift.systematic.v = {0.05, -0.02, 0.04};
  ReconConfig recon;
  recon.lambda_s = 0.0;
  const ScpaResult base = scpa_loss(scene, soa, drift, recon);

  Scene permuted = scene;
  std::swap(permuted.target_cameras[0], permuted.target_cameras[2]);
  std::swap(permuted.target_images[0], permuted.target_images[2]);
  const ScpaResult perm = scpa_loss(permuted, soa, drift, recon);
  CHECK(perm.loss_total == doctest::Approx(base.loss_total).epsilon(1e-12));
  CHECK(perm.targets[0].loss_initial ==
        doctest::Approx(base.targets[2].loss_initial).epsilon(1e-12));
}

}  // TEST_SUITE
