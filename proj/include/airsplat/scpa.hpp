// Self-Consistent Pose Alignment: quantify the repeated pose drift between
// two oracle pose passes, back-extrapolate it, and supervise each target with
// the smaller of the aligned-pose and initial-pose reconstruction losses.
// Poses are constants for differentiation; gradients flow only through the
// chosen branch's render.

#pragma once

#include <cstdint>
#include <vector>

#include "airsplat/oracles.hpp"
#include "airsplat/render.hpp"

namespace airsplat {

struct ReconConfig {
  double lambda_s = 0.1;  // weight of the perceptual (1 - SSIM) term
  RenderConfig render;
};

struct RecLossResult {
  double total = 0;
  double mse_term = 0;
  double perc_term = 0;          // lambda_s * (1 - ssim)
  std::vector<double> d_image;   // d(total)/d(rendered), filled when requested
};

// MSE (mean over pixels and channels) plus the weighted pluggable
// dissimilarity, default 1 - SSIM. lambda_s = 0 skips the perceptual term.
RecLossResult rec_loss(const Image& rendered, const Image& gt, double lambda_s,
                       bool with_grad = false);

enum class ScpaBranch { kAligned, kInitial };

struct ScpaTarget {
  Twist xi;
  RigidPose aligned_pose;
  double loss_aligned = 0;
  double loss_initial = 0;
  ScpaBranch chosen = ScpaBranch::kInitial;
  bool near_pi_fallback = false;  // log_map domain error, initial branch used
};

struct ScpaResult {
  std::vector<ScpaTarget> targets;
  double loss_total = 0;  // sum over targets of min(aligned, initial)
  double mse_sum = 0;     // chosen branches
  double perc_sum = 0;
  int aligned_count = 0;
  int initial_count = 0;
  uint64_t digest = 0;  // branch choices + chosen renders' structure
};

// xi = log(p2 * p1^-1); propagates RotationNearPiError.
Twist drift_twist(const RigidPose& p1, const RigidPose& p2);

// exp(-xi) * p1
RigidPose align_pose(const RigidPose& p1, const Twist& xi);

// Full loop: pass-1 poses from the oracle on ground-truth target poses,
// pass-2 re-prediction on the pass-1 poses, per-target correction and
// minimum-error supervision. grad, when non-null, accumulates d/d(alpha, c,
// mean) through each target's chosen render.
ScpaResult scpa_loss(const Scene& scene, const PrimitiveSoA& soa,
                     const DriftModel& drift, const ReconConfig& recon,
                     RenderGrad* grad = nullptr);

namespace detail {
// Core with injected pose passes; scpa_loss wraps it with the oracle.
ScpaResult scpa_core(const Scene& scene, const PrimitiveSoA& soa,
                     const std::vector<RigidPose>& pass1,
                     const std::vector<RigidPose>& pass2,
                     const ReconConfig& recon, RenderGrad* grad);
}  // namespace detail

}  // namespace airsplat
