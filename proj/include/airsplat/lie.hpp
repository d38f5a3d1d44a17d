// SE(3)/SO(3) group and algebra operations.
//
// Twists use the full SE(3) exponential with the left-Jacobian translation
// coupling, so exp/log compose exactly with pose left-multiplication. All
// functions are pure and thread-safe.

#pragma once

#include "airsplat/common.hpp"
#include "airsplat/vecmath.hpp"

namespace airsplat {

// Element of se(3): rotation part omega (axis * angle, radians) and
// translation part v (scene units).
struct Twist {
  Vec3 omega;
  Vec3 v;
};

inline Twist operator-(const Twist& t) { return {-t.omega, -t.v}; }
inline Twist operator+(const Twist& a, const Twist& b) {
  return {a.omega + b.omega, a.v + b.v};
}

// Rigid transform x_out = R * x + t, world-to-camera convention throughout.
struct RigidPose {
  Mat3 rotation = Mat3::identity();
  Vec3 translation;

  static RigidPose identity() { return RigidPose{}; }

  // Max of ||R^T R - I||_F drift and |det(R) - 1|.
  double orthonormality_error() const;
  bool is_valid(double tol = 1e-9) const { return orthonormality_error() < tol; }
};

// Threshold below which exp/log switch to 2nd-order Taylor branches.
constexpr double kSmallAngle = 1e-8;

// Rotation angles at or above pi - kLogDomainMargin are rejected by log_map.
constexpr double kLogDomainMargin = 1e-6;

RigidPose exp_map(const Twist& xi);

// Inverse of exp_map. Throws RotationNearPiError when the rotation angle is
// >= pi - kLogDomainMargin (no unique inverse).
Twist log_map(const RigidPose& pose);

// Matrix product a * b on homogeneous representations (b applied first).
// Re-orthonormalizes the rotation when accumulated drift exceeds 1e-12.
RigidPose compose(const RigidPose& a, const RigidPose& b);

RigidPose inverse(const RigidPose& pose);

struct GeodesicDistance {
  double rot_angle = 0;   // radians
  double trans_dist = 0;  // scene units
};

GeodesicDistance geodesic_distance(const RigidPose& a, const RigidPose& b);

namespace detail {

// exp_map with the branch forced, for branch-continuity tests.
RigidPose exp_map_branch(const Twist& xi, bool small_angle);

// Gram-Schmidt re-orthonormalization via cross products.
Mat3 orthonormalize(const Mat3& r);

}  // namespace detail

}  // namespace airsplat
