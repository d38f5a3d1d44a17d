// Deterministic CPU rasterizer for pixel-aligned Gaussian primitives.
//
// Forward: EWA projection of each primitive, global depth sort (z ascending,
// flat-index tie-break), per-pixel front-to-back alpha blending with a 3-sigma
// footprint cut. Per-pixel contributor lists are retained in CSR form for the
// backward pass. Output is bit-identical for any worker count: the work is
// split over fixed row blocks and all reductions run in a fixed order.
//
// Backward: analytic gradients of a scalar image loss with respect to
// opacity, color and mean. The mean gradient includes both the projected-mean
// path and the projection-Jacobian path through the 2D covariance; the depth
// sort is treated as locally constant.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "airsplat/scene.hpp"

namespace airsplat {

struct RenderConfig {
  Vec3 background{0, 0, 0};
  double z_near = 0.05;
};

struct ContribEntry {
  int32_t prim;  // flat primitive index
  double g;      // Gaussian weight at the pixel center, in (0, 1]
};

struct RenderTarget {
  Image color;
  std::vector<double> depth;          // alpha-weighted mean camera-frame z
  std::vector<double> transmittance;  // residual T after blending
  // CSR contributor lists, depth order per pixel: entries[offsets[p] ..
  // offsets[p+1]) belong to pixel p = r * width + c.
  std::vector<int32_t> offsets;
  std::vector<ContribEntry> entries;
  int degenerate_skipped = 0;
  int behind_skipped = 0;
  Camera camera;
  RenderConfig config;
  int n_prims = 0;

  // Order-sensitive digest of the contributor structure; two renders get the
  // same digest iff every pixel sees the same primitives in the same order.
  uint64_t structure_digest() const;
};

struct RenderGrad {
  std::vector<double> d_opacity;  // n
  std::vector<double> d_color;    // 3n
  std::vector<double> d_mean;     // 3n
};

struct ProjectedGaussian {
  Vec2 mean2d;
  Sym2 cov2d;
  double z = 0;
};

// EWA projection of one primitive: cov2d = J W Sigma W^T J^T + 0.3 I.
// Throws BehindCameraError when camera-frame z <= z_near.
ProjectedGaussian project_ewa(const GaussianPrimitive& prim, const Camera& cam,
                              double z_near = 0.05);

RenderTarget render(const PrimitiveSoA& soa, const Camera& cam,
                    const RenderConfig& config = {});

// d_color_image holds dLoss/dC(u) in image layout. The SoA must be the one
// the target was rendered from.
RenderGrad render_backward(const RenderTarget& target, const PrimitiveSoA& soa,
                           const std::vector<double>& d_color_image);

namespace detail {
// Conic (inverse 2x2 covariance); nullopt when det < 1e-12 (degenerate).
std::optional<Sym2> conic_of(const Sym2& cov2d);
}  // namespace detail

}  // namespace airsplat
