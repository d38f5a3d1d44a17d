#include "airsplat/scene.hpp"

#include <cmath>

namespace airsplat {

void Camera::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw ConfigError("camera: fx, fy must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("camera: non-positive image size");
  if (!(cx >= 0 && cx < width)) throw ConfigError("camera: cx out of [0, width)");
  if (!(cy >= 0 && cy < height)) throw ConfigError("camera: cy out of [0, height)");
  if (!pose.is_valid(1e-9)) throw ConfigError("camera: rotation not orthonormal");
}

void GaussianPrimitive::validate() const {
  if (std::abs(rotation.norm() - 1.0) > 1e-9)
    throw ConfigError("primitive: quaternion not unit-norm");
  if (!(scale.x > 0 && scale.y > 0 && scale.z > 0))
    throw ConfigError("primitive: scales must be positive");
  if (!(opacity >= 0.0 && opacity <= 1.0))
    throw ConfigError("primitive: opacity outside [0,1]");
  for (int i = 0; i < 3; ++i)
    if (!(color[i] >= 0.0 && color[i] <= 1.0))
      throw ConfigError("primitive: color outside [0,1]");
}

Mat3 covariance_of(const GaussianPrimitive& prim) {
  const Mat3 r = quat_to_mat(prim.rotation);
  Mat3 s = Mat3::zero();
  s(0, 0) = prim.scale.x * prim.scale.x;
  s(1, 1) = prim.scale.y * prim.scale.y;
  s(2, 2) = prim.scale.z * prim.scale.z;
  Mat3 cov = r * s * transpose(r);
  // Force exact symmetry against round-off.
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      const double v = 0.5 * (cov(i, j) + cov(j, i));
      cov(i, j) = v;
      cov(j, i) = v;
    }
  return cov;
}

void Scene::validate() const {
  if (maps.size() != context_cameras.size())
    throw ConfigError("scene: |maps| != |context_cameras|");
  if (target_images.size() != target_cameras.size())
    throw ConfigError("scene: |target_images| != |target_cameras|");
  for (std::size_t v = 0; v < maps.size(); ++v) {
    const auto& m = maps[v];
    const auto& cam = context_cameras[v];
    if (m.height != cam.height || m.width != cam.width)
      throw ConfigError("scene: map grid does not match camera size");
    const std::size_t n = static_cast<std::size_t>(m.height) * m.width;
    if (m.prims.size() != n || m.floater.size() != n || m.clean_mean.size() != n)
      throw ConfigError("scene: map arrays inconsistent");
  }
  for (const auto& img : target_images)
    for (double x : img.data)
      if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("scene: image values outside [0,1]");
}

void SceneConfig::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("scene config: width/height must be positive");
  if (context_views <= 0) throw ConfigError("scene config: context_views must be positive");
  if (target_views <= 0) throw ConfigError("scene config: target_views must be positive");
  if (!(orbit_radius > 0)) throw ConfigError("scene config: orbit_radius must be positive");
  if (!(fov_deg > 10 && fov_deg < 150)) throw ConfigError("scene config: fov_deg out of range");
  if (!(box_half > 0) || !(sky_half > box_half))
    throw ConfigError("scene config: need 0 < box_half < sky_half");
  if (!(orbit_radius > box_half && orbit_radius < sky_half))
    throw ConfigError("scene config: orbit must lie between box and sky");
  if (!(floater_fraction >= 0.0 && floater_fraction <= 1.0))
    throw ConfigError("scene config: floater_fraction outside [0,1]");
  if (!(alpha_min > 0 && alpha_max <= 1 && alpha_min <= alpha_max))
    throw ConfigError("scene config: alpha range invalid");
  if (init_color_noise < 0)
    throw ConfigError("scene config: init_color_noise must be >= 0");
  if (init_mean_noise < 0)
    throw ConfigError("scene config: init_mean_noise must be >= 0");
  if (!(sigma_tangent > 0 && sigma_normal > 0))
    throw ConfigError("scene config: sigma_tangent/sigma_normal must be positive");
  if (texture_cells <= 0) throw ConfigError("scene config: texture_cells must be positive");
}

PrimitiveSoA flatten(const Scene& scene) {
  PrimitiveSoA soa;
  soa.views = scene.view_count();
  if (soa.views == 0) return soa;
  soa.height = scene.maps.front().height;
  soa.width = scene.maps.front().width;
  std::size_t total = 0;
  for (const auto& m : scene.maps) total += m.size();
  soa.n = static_cast<int>(total);
  soa.mean.resize(3 * total);
  soa.opacity.resize(total);
  soa.color.resize(3 * total);
  soa.cov3d.resize(total);
  soa.floater.resize(total);
  std::size_t i = 0;
  for (const auto& m : scene.maps) {
    for (std::size_t k = 0; k < m.size(); ++k, ++i) {
      const auto& p = m.prims[k];
      soa.mean[3 * i] = p.mean.x;
      soa.mean[3 * i + 1] = p.mean.y;
      soa.mean[3 * i + 2] = p.mean.z;
      soa.opacity[i] = p.opacity;
      soa.color[3 * i] = p.color.x;
      soa.color[3 * i + 1] = p.color.y;
      soa.color[3 * i + 2] = p.color.z;
      soa.cov3d[i] = covariance_of(p);
      soa.floater[i] = m.floater[k];
    }
  }
  return soa;
}

}  // namespace airsplat
