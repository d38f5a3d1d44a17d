// Pixel-aligned Gaussian scene representation and pinhole cameras.

#pragma once

#include <cstdint>
#include <vector>

#include "airsplat/image.hpp"
#include "airsplat/lie.hpp"
#include "airsplat/vecmath.hpp"

namespace airsplat {

struct Camera {
  double fx = 1, fy = 1, cx = 0, cy = 0;  // pixels
  RigidPose pose;                          // world-to-camera
  int width = 0, height = 0;

  void validate() const;

  Vec3 to_camera(const Vec3& p_world) const {
    return pose.rotation * p_world + pose.translation;
  }
  Vec3 center() const { return -(transpose(pose.rotation) * pose.translation); }

  // Perspective projection of a camera-frame point (z > 0) to pixel
  // coordinates; pixel (r, c) covers [r, r+1) x [c, c+1), center (c+.5, r+.5).
  Vec2 project_cam(const Vec3& pc) const {
    return {fx * pc.x / pc.z + cx, fy * pc.y / pc.z + cy};
  }

  // World-frame unit direction of the ray through pixel center (r, c).
  Vec3 pixel_ray(int r, int c) const {
    const Vec3 dir_cam{(c + 0.5 - cx) / fx, (r + 0.5 - cy) / fy, 1.0};
    return normalized(transpose(pose.rotation) * dir_cam);
  }
};

struct GaussianPrimitive {
  Vec3 mean;
  Quat rotation;       // unit
  Vec3 scale;          // positive std-devs
  double opacity = 1;  // [0, 1]
  Vec3 color;          // [0, 1]^3

  void validate() const;
};

// Sigma = R S S^T R^T
Mat3 covariance_of(const GaussianPrimitive& prim);

// One pixel-aligned grid of primitives per context view. Parallel arrays,
// row-major: index = row * width + col.
struct GaussianMap {
  int view_index = 0;
  int height = 0, width = 0;
  std::vector<GaussianPrimitive> prims;
  std::vector<uint8_t> floater;  // 1 for injected floaters
  std::vector<Vec3> clean_mean;  // pre-displacement mean (== mean for inliers)

  std::size_t size() const { return prims.size(); }
};

struct Scene {
  std::vector<Camera> context_cameras;
  std::vector<GaussianMap> maps;  // one per context camera
  std::vector<Camera> target_cameras;
  std::vector<Image> target_images;   // ground truth, rendered pre-corruption
  std::vector<Image> context_images;  // ground truth for context supervision

  int view_count() const { return static_cast<int>(context_cameras.size()); }
  int target_count() const { return static_cast<int>(target_cameras.size()); }
  void validate() const;
};

struct SceneConfig {
  int width = 48;
  int height = 48;
  int context_views = 6;
  int target_views = 3;
  double orbit_radius = 4.0;
  double fov_deg = 60.0;
  double box_half = 1.35;
  double sky_half = 10.0;
  double camera_height = 0.55;
  double floater_fraction = 0.0;   // f in [0, 1]
  double floater_offset = 1.2;     // along-ray displacement, scene units
  // Strict placement keeps the noiseless-teacher invariants exact (every
  // floater rated far below 1 with the L_geo clamp engaged, no non-floater
  // sample or median disturbed). Loose placement only asks for a valid
  // partner projection and is meant for tiny test scenes where the strict
  // filter has no room.
  bool strict_floaters = true;
  double alpha_min = 0.65;
  double alpha_max = 0.9;
  // Std-dev of the Gaussian color noise applied to the trainable initial
  // primitives after the ground-truth images are rendered; models an
  // imperfect prediction head. Zero keeps the init photometrically exact.
  double init_color_noise = 0.08;
  // Std-dev of isotropic Gaussian noise on the trainable initial means (same
  // post-GT-render timing as the color noise). Breaks the exact-consensus
  // initialization, so the spatial regularizer has real discrepancies to
  // heal; zero preserves the strict-floater rating invariants.
  double init_mean_noise = 0.0;
  double sigma_tangent = 0.65;     // std-dev in pixel footprints at hit depth
  double sigma_normal = 0.12;
  int texture_cells = 9;

  void validate() const;
};

// Structure-of-arrays view over all primitives of a scene. Flat index
// contract: index = view * H*W + row * W + col.
struct PrimitiveSoA {
  int n = 0;
  int views = 0, height = 0, width = 0;
  std::vector<double> mean;     // 3n
  std::vector<double> opacity;  // n
  std::vector<double> color;    // 3n
  std::vector<Mat3> cov3d;      // per-primitive world covariance (frozen)
  std::vector<uint8_t> floater;

  int flat_index(int view, int row, int col) const {
    return (view * height + row) * width + col;
  }
  Vec3 mean_at(int i) const { return {mean[3 * i], mean[3 * i + 1], mean[3 * i + 2]}; }
  Vec3 color_at(int i) const { return {color[3 * i], color[3 * i + 1], color[3 * i + 2]}; }
};

PrimitiveSoA flatten(const Scene& scene);

}  // namespace airsplat
