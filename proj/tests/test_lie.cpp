#include <cmath>

#include "doctest.h"

#include "airsplat/lie.hpp"

using namespace airsplat;

namespace {

double pose_diff(const RigidPose& a, const RigidPose& b) {
  return std::max(frobenius_norm(a.rotation - b.rotation),
                  norm(a.translation - b.translation));
}

double twist_inf(const Twist& a, const Twist& b) {
  double m = 0;
  for (int k = 0; k < 3; ++k) {
    m = std::max(m, std::abs(a.omega[k] - b.omega[k]));
    m = std::max(m, std::abs(a.v[k] - b.v[k]));
  }
  return m;
}

Twist sample_twist(SeqRng& rng, double max_angle, double max_trans) {
  Vec3 axis{rng.uniform() * 2 - 1, rng.uniform() * 2 - 1, rng.uniform() * 2 - 1};
  axis = norm(axis) > 1e-9 ? normalized(axis) : Vec3{1, 0, 0};
  Vec3 v{rng.uniform() * 2 - 1, rng.uniform() * 2 - 1, rng.uniform() * 2 - 1};
  return {rng.uniform() * max_angle * axis, max_trans * v};
}

}  // namespace

TEST_SUITE("lie") {

TEST_CASE("exp of the zero twist is the identity") {
  const RigidPose p = exp_map(Twist{});
  CHECK(pose_diff(p, RigidPose::identity()) == 0.0);
}

TEST_CASE("exp of a pure translation") {
  const RigidPose p = exp_map(Twist{{0, 0, 0}, {1, 2, 3}});
  CHECK(frobenius_norm(p.rotation - Mat3::identity()) == 0.0);
  CHECK(p.translation.x == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p.translation.y == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(p.translation.z == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("exp of a 90-degree x rotation matches Rodrigues") {
  const RigidPose p = exp_map(Twist{{kPi / 2, 0, 0}, {0, 0, 0}});
  // R_x(90) = [[1,0,0],[0,0,-1],[0,1,0]]
  Mat3 expect;
  expect.m = {1, 0, 0, 0, 0, -1, 0, 1, 0};
  CHECK(frobenius_norm(p.rotation - expect) < 1e-15);
  CHECK(norm(p.translation) == 0.0);
}

TEST_CASE("log of the identity is the zero twist") {
  const Twist xi = log_map(RigidPose::identity());
  CHECK(norm(xi.omega) == 0.0);
  CHECK(norm(xi.v) == 0.0);
}

TEST_CASE("log inverts exp") {
  const Twist xi{{0.1, -0.2, 0.05}, {1, 0, -1}};
  const Twist back = log_map(exp_map(xi));
  CHECK(twist_inf(back, xi) < 1e-10);
}

TEST_CASE("log rejects 180-degree rotations") {
  RigidPose p;
  p.rotation.m = {1, 0, 0, 0, -1, 0, 0, 0, -1};  // 180 degrees about x
  CHECK_THROWS_AS(log_map(p), RotationNearPiError);
}

TEST_CASE("compose with identity and with the inverse") {
  SeqRng rng(3);
  const RigidPose p = exp_map(sample_twist(rng, 2.0, 2.0));
  CHECK(pose_diff(compose(p, RigidPose::identity()), p) == 0.0);
  CHECK(pose_diff(compose(p, inverse(p)), RigidPose::identity()) < 1e-12);
  CHECK(pose_diff(compose(inverse(p), p), RigidPose::identity()) < 1e-12);
}

TEST_CASE("two axis-aligned 90-degree rotations compose to the hand product") {
  const RigidPose rx = exp_map(Twist{{kPi / 2, 0, 0}, {0, 0, 0}});
  const RigidPose ry = exp_map(Twist{{0, kPi / 2, 0}, {0, 0, 0}});
  // R_y(90) * R_x(90), exact integer entries.
  Mat3 expect;
  expect.m = {0, 1, 0, 0, 0, -1, -1, 0, 0};
  CHECK(frobenius_norm(compose(ry, rx).rotation - expect) < 1e-15);
}

TEST_CASE("inverse of a pure translation negates it") {
  RigidPose p;
  p.translation = {1, -2, 3};
  const RigidPose inv = inverse(p);
  CHECK(norm(inv.translation + p.translation) == 0.0);
}

TEST_CASE("geodesic distance cases") {
  const RigidPose p = exp_map(Twist{{0.3, 0.1, -0.2}, {1, 2, 3}});
  const GeodesicDistance same = geodesic_distance(p, p);
  CHECK(same.rot_angle < 1e-12);
  CHECK(same.trans_dist == 0.0);

  const RigidPose rx = exp_map(Twist{{kPi / 2, 0, 0}, {0, 0, 0}});
  const GeodesicDistance d = geodesic_distance(RigidPose::identity(), rx);
  CHECK(d.rot_angle == doctest::Approx(kPi / 2).epsilon(1e-12));
  CHECK(d.trans_dist == 0.0);

  RigidPose t;
  t.translation = {3, 4, 0};
  const GeodesicDistance dt = geodesic_distance(RigidPose::identity(), t);
  CHECK(dt.rot_angle == 0.0);
  CHECK(dt.trans_dist == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("roundtrip property over 1000 random twists") {
  SeqRng rng(17);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const Twist xi = sample_twist(rng, kPi - 0.01, 5.0);
    worst = std::max(worst, twist_inf(log_map(exp_map(xi)), xi));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("compose is associative within 1e-12") {
  SeqRng rng(19);
  for (int i = 0; i < 200; ++i) {
    const RigidPose a = exp_map(sample_twist(rng, 3.0, 3.0));
    const RigidPose b = exp_map(sample_twist(rng, 3.0, 3.0));
    const RigidPose c = exp_map(sample_twist(rng, 3.0, 3.0));
    CHECK(pose_diff(compose(compose(a, b), c), compose(a, compose(b, c))) < 1e-12);
  }
}

TEST_CASE("exp of the negated twist is the inverse pose") {
  SeqRng rng(23);
  for (int i = 0; i < 200; ++i) {
    const Twist xi = sample_twist(rng, kPi - 0.1, 3.0);
    CHECK(pose_diff(exp_map(-xi), inverse(exp_map(xi))) < 1e-10);
  }
}

TEST_CASE("small-angle and general branches agree at the boundary scale") {
  SeqRng rng(29);
  for (int i = 0; i < 100; ++i) {
    Twist xi = sample_twist(rng, 1.0, 1.0);
    const double n = norm(xi.omega);
    if (n > 0) xi.omega = (1e-6 / n) * xi.omega;
    const RigidPose small = detail::exp_map_branch(xi, true);
    const RigidPose general = detail::exp_map_branch(xi, false);
    CHECK(pose_diff(small, general) < 1e-12);
  }
}

TEST_CASE("compose re-orthonormalizes drifted rotations") {
  RigidPose p = exp_map(Twist{{0.4, -0.3, 0.7}, {1, 0, 0}});
  p.rotation(0, 0) += 5e-11;  // inject drift beyond the 1e-12 gate
  const RigidPose q = compose(p, p);
  CHECK(q.orthonormality_error() < 1e-12);
}

}  // TEST_SUITE
