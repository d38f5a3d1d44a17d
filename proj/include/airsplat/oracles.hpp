// Configurable stand-ins for the two frozen external networks: a drifting
// pose oracle replacing the foundation-model pose head, and a ground-truth-
// plus-noise teacher replacing the two-view teacher network. Both are pure
// functions of (config, seed, inputs).

#pragma once

#include <utility>
#include <vector>

#include "airsplat/lie.hpp"
#include "airsplat/scene.hpp"

namespace airsplat {

struct DriftModel {
  Twist systematic;              // fixed per-scene drift delta
  double noise_sigma_rot = 0;    // radians
  double noise_sigma_trans = 0;  // scene units
  uint64_t seed = 0;

  void validate() const;
};

struct TeacherNoise {
  double sigma_mean = 0;  // Gaussian perturbation of ground-truth means
  uint64_t seed = 0;

  void validate() const;
};

// For each content pose Q (the pose where the image content truly sits),
// returns exp((delta + n)^) * Q, with n drawn deterministically from
// (seed, invocation, index). invocation is 1 for the first pose pass and 2
// for the re-prediction pass; with zero noise the drift repeats exactly.
std::vector<RigidPose> predict_poses(const DriftModel& drift,
                                     const std::vector<RigidPose>& content_poses,
                                     int invocation);

// Adjacent-view partner under the pairing (0,1),(2,3),...; an odd leftover
// view pairs with its predecessor.
int partner_view(int v, int num_views);

// Undirected pair list, e.g. V=5 -> (0,1),(2,3),(4,3).
std::vector<std::pair<int, int>> adjacent_pairs(int num_views);

// Noisy copy of the uncorrupted ground-truth mean map of view pair.first,
// pixel-aligned with the student's map. pair must be consistent with the
// adjacent pairing (PairOutOfRangeError otherwise).
std::vector<Vec3> teacher_means(const TeacherNoise& noise, const Scene& scene,
                                std::pair<int, int> pair);

}  // namespace airsplat
