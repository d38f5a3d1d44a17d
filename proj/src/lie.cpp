#include "airsplat/lie.hpp"

#include <algorithm>
#include <cmath>

namespace airsplat {

namespace {

struct ExpCoeffs {
  double sin_t;   // sin(t)/t
  double cos_t;   // (1 - cos(t))/t^2
  double jac_t;   // (t - sin(t))/t^3
};

ExpCoeffs exp_coeffs(double theta, bool small_angle) {
  const double t2 = theta * theta;
  if (small_angle) {
    // 2nd-order Taylor expansions.
    return {1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0};
  }
  const double s = std::sin(theta);
  // (1 - cos)/theta^2 via the half-angle form, which has no cancellation.
  const double half_sinc = std::sin(0.5 * theta) / (0.5 * theta);
  const double cos_t = 0.5 * half_sinc * half_sinc;
  // (theta - sin)/theta^3 cancels catastrophically below ~1e-2; use Taylor.
  const double jac_t = theta < 1e-2
                           ? 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
                           : (theta - s) / (t2 * theta);
  return {s / theta, cos_t, jac_t};
}

}  // namespace

double RigidPose::orthonormality_error() const {
  const Mat3 rtr = transpose(rotation) * rotation;
  const double ortho = frobenius_norm(rtr - Mat3::identity());
  const double d = std::abs(det(rotation) - 1.0);
  return std::max(ortho, d);
}

namespace detail {

RigidPose exp_map_branch(const Twist& xi, bool small_angle) {
  const double theta = norm(xi.omega);
  const ExpCoeffs c = exp_coeffs(theta, small_angle);
  const Mat3 w = skew(xi.omega);
  const Mat3 w2 = w * w;
  RigidPose out;
  out.rotation = Mat3::identity() + c.sin_t * w + c.cos_t * w2;
  const Mat3 left_jac = Mat3::identity() + c.cos_t * w + c.jac_t * w2;
  out.translation = left_jac * xi.v;
  return out;
}

Mat3 orthonormalize(const Mat3& r) {
  Vec3 r0{r(0, 0), r(0, 1), r(0, 2)};
  Vec3 r1{r(1, 0), r(1, 1), r(1, 2)};
  r0 = normalized(r0);
  Vec3 r2 = normalized(cross(r0, r1));
  r1 = cross(r2, r0);
  Mat3 out;
  out.m = {r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z};
  return out;
}

}  // namespace detail

RigidPose exp_map(const Twist& xi) {
  return detail::exp_map_branch(xi, norm(xi.omega) < kSmallAngle);
}

Twist log_map(const RigidPose& pose) {
  const Mat3& r = pose.rotation;
  const double cos_theta = std::clamp(0.5 * (trace(r) - 1.0), -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  if (theta >= kPi - kLogDomainMargin)
    throw RotationNearPiError("log_map: rotation angle within 1e-6 of pi");

  // vee(R - R^T) = 2 sin(theta) * axis
  const Vec3 vee{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};

  Twist xi;
  double inv_jac_coeff;  // coefficient of w^2 in V^{-1}
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    xi.omega = (0.5 + t2 / 12.0) * vee;
    inv_jac_coeff = 1.0 / 12.0 + t2 / 720.0;
  } else {
    const double s = std::sin(theta);
    xi.omega = (theta / (2.0 * s)) * vee;
    // (1/theta^2) * (1 - (theta/2) cot(theta/2))
    inv_jac_coeff =
        (1.0 - 0.5 * theta * (1.0 + std::cos(theta)) / s) / (theta * theta);
  }

  const Mat3 w = skew(xi.omega);
  const Mat3 inv_left_jac =
      Mat3::identity() - 0.5 * w + inv_jac_coeff * (w * w);
  xi.v = inv_left_jac * pose.translation;
  return xi;
}

RigidPose compose(const RigidPose& a, const RigidPose& b) {
  RigidPose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  if (out.orthonormality_error() > 1e-12)
    out.rotation = detail::orthonormalize(out.rotation);
  return out;
}

RigidPose inverse(const RigidPose& pose) {
  RigidPose out;
  out.rotation = transpose(pose.rotation);
  out.translation = -(out.rotation * pose.translation);
  return out;
}

GeodesicDistance geodesic_distance(const RigidPose& a, const RigidPose& b) {
  const Mat3 rel = a.rotation * transpose(b.rotation);
  // atan2 of the skew/trace parts stays accurate for tiny angles, where
  // acos((trace-1)/2) bottoms out near sqrt(eps).
  const Vec3 vee{rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1)};
  const double sin_theta = 0.5 * norm(vee);
  const double cos_theta = 0.5 * (trace(rel) - 1.0);
  GeodesicDistance d;
  d.rot_angle = std::atan2(sin_theta, cos_theta);
  d.trans_dist = norm(a.translation - b.translation);
  return d;
}

}  // namespace airsplat
