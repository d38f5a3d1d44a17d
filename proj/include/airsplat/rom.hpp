// Rating-based Opacity Matching: teacher-relative geometric ratings, the
// one-sided opacity margin loss, and the opacity-weighted clamped spatial
// regularizer.
//
// Context views are partitioned into adjacent pairs; within a pair each
// view's primitives are projected into the partner view and the partner's
// mean map is bilinearly sampled at the sub-pixel landing point. Errors are
// normalized by the median camera-frame depth of the valid projections of
// that directed evaluation. Ratings, the sampled map values, the median
// normalizer and the sg[alpha] weights are stop-gradient quantities: the
// mean gradient of L_geo flows only through the explicit mean in the error
// numerator and through its own projection.
//
// In the composite rom_losses the spatial term floors the student error at
// the teacher's (min(max(eps, eps_teacher), tau)): primitives already at or
// below the teacher's consensus error are inert, in both value and gradient.

#pragma once

#include <cstdint>
#include <vector>

#include "airsplat/oracles.hpp"
#include "airsplat/scene.hpp"

namespace airsplat {

struct RomParams {
  double eta = 1e-8;          // stability constant in the error denominator
  double lambda_decay = 5.0;  // rating decay rate
  double tau = 2.0;           // L_geo error clamp
  double z_near = 0.05;

  void validate() const;
};

// Per-primitive teacher ratings over the full flat index space; entries with
// valid == 0 are excluded from every loss mean.
struct RatingField {
  std::vector<double> eps_student;
  std::vector<double> eps_teacher;
  std::vector<double> excess;  // max(0, eps_student - eps_teacher)
  std::vector<double> rating;  // exp(-lambda * excess), in (0, 1]
  std::vector<uint8_t> valid;
  int n_valid = 0;
};

// Directed geometric error of one view's means against a sampled mean map.
struct GeoErrorResult {
  std::vector<double> eps;
  std::vector<uint8_t> valid;
  std::vector<Vec3> d_eps_d_mean;  // zero where invalid
  std::vector<double> proj_depth;  // camera-frame z in the sampling view
  double median_depth = 0;
  // Discrete decisions (validity, bilinear cell indices) for kink detection.
  uint64_t digest = 0;
};

// map_values is the H x W mean grid of the sampling view (row-major, sizes
// from cam.height/width); means_query may have any length.
// median_override, when >= 0, replaces the freshly computed median (used to
// hold stop-gradient values fixed during finite differencing).
GeoErrorResult geometric_error(const std::vector<Vec3>& means_query,
                               const std::vector<Vec3>& map_values,
                               const Camera& cam, double eta,
                               double z_near = 0.05,
                               double median_override = -1.0);

// Ratings from per-primitive student/teacher errors (valid entries only).
RatingField teacher_rating(const std::vector<double>& eps_student,
                           const std::vector<double>& eps_teacher,
                           const std::vector<uint8_t>& valid, double lambda);

struct OpacityLoss {
  double loss = 0;
  std::vector<double> d_alpha;
};

// Mean over valid primitives of max(0, alpha - rating)^2.
OpacityLoss opacity_matching_loss(const std::vector<double>& alpha,
                                  const RatingField& ratings);

struct SpatialGeoLoss {
  double loss = 0;
  std::vector<Vec3> d_mean;
};

// Mean over valid primitives of sg[alpha] * min(eps, tau); gradient flows
// into the means only (zero where clamped).
SpatialGeoLoss spatial_geo_loss(const std::vector<double>& sg_alpha,
                                const GeoErrorResult& err, double tau);

// Stop-gradient quantities captured at a base point so finite differences
// probe exactly the derivative the implementation computes.
struct RomFrozen {
  std::vector<double> sample_means;    // 3n: map values used for sampling
  std::vector<double> sg_alpha;        // n
  std::vector<double> rating;          // n
  std::vector<uint8_t> rating_valid;   // n
  std::vector<double> median_student;  // per view
};

struct RomResult {
  double loss_geo = 0;
  double loss_opa = 0;
  RatingField field;
  std::vector<double> d_alpha;  // n
  std::vector<double> d_mean;   // 3n
  uint64_t digest = 0;

  RomFrozen make_frozen(const PrimitiveSoA& soa) const;
  std::vector<double> median_student;  // per view, for make_frozen
};

// Full pipeline over all adjacent pairs. V >= 2 context views required.
RomResult rom_losses(const Scene& scene, const PrimitiveSoA& soa,
                     const TeacherNoise& teacher, const RomParams& params,
                     const RomFrozen* frozen = nullptr);

namespace romdebug {
// Test hook: deliberately negate the L_opa gradient (mutation testing of the
// finite-difference harness).
void set_negate_opa_grad(bool on);
bool negate_opa_grad();
}  // namespace romdebug

}  // namespace airsplat
