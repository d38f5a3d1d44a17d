#include "airsplat/oracles.hpp"

#include <cmath>

namespace airsplat {

void DriftModel::validate() const {
  if (!(norm(systematic.omega) < kPi / 2))
    throw ConfigError("drift: ||omega|| must be below pi/2");
  if (noise_sigma_rot < 0 || noise_sigma_trans < 0)
    throw ConfigError("drift: noise sigmas must be >= 0");
}

void TeacherNoise::validate() const {
  if (sigma_mean < 0) throw ConfigError("teacher: sigma_mean must be >= 0");
}

std::vector<RigidPose> predict_poses(const DriftModel& drift,
                                     const std::vector<RigidPose>& content_poses,
                                     int invocation) {
  if (invocation < 1) throw ConfigError("predict_poses: invocation must be >= 1");
  std::vector<RigidPose> out;
  out.reserve(content_poses.size());
  for (std::size_t t = 0; t < content_poses.size(); ++t) {
    Twist xi = drift.systematic;
    if (drift.noise_sigma_rot > 0 || drift.noise_sigma_trans > 0) {
      for (int k = 0; k < 3; ++k) {
        xi.omega[k] += drift.noise_sigma_rot *
                       det_normal(det_key(drift.seed, 0xd21f7u, static_cast<uint64_t>(invocation),
                                          t * 8 + static_cast<uint64_t>(k)));
        xi.v[k] += drift.noise_sigma_trans *
                   det_normal(det_key(drift.seed, 0xd21f7u, static_cast<uint64_t>(invocation),
                                      t * 8 + 4 + static_cast<uint64_t>(k)));
      }
    }
    out.push_back(compose(exp_map(xi), content_poses[t]));
  }
  return out;
}

int partner_view(int v, int num_views) {
  if (num_views < 2) throw InsufficientViewsError("pairing needs at least 2 views");
  if (v < 0 || v >= num_views) throw PairOutOfRangeError("view index out of range");
  if (v == num_views - 1 && (num_views % 2) == 1) return num_views - 2;
  return (v % 2 == 0) ? v + 1 : v - 1;
}

std::vector<std::pair<int, int>> adjacent_pairs(int num_views) {
  if (num_views < 2) throw InsufficientViewsError("pairing needs at least 2 views");
  std::vector<std::pair<int, int>> pairs;
  for (int v = 0; v + 1 < num_views; v += 2) pairs.emplace_back(v, v + 1);
  if (num_views % 2 == 1) pairs.emplace_back(num_views - 1, num_views - 2);
  return pairs;
}

std::vector<Vec3> teacher_means(const TeacherNoise& noise, const Scene& scene,
                                std::pair<int, int> pair) {
  const int v = pair.first, vp = pair.second;
  const int n_views = scene.view_count();
  if (v < 0 || v >= n_views || vp < 0 || vp >= n_views)
    throw PairOutOfRangeError("teacher_means: view index out of range");
  if (partner_view(v, n_views) != vp && partner_view(vp, n_views) != v)
    throw PairOutOfRangeError("teacher_means: views are not an adjacent pair");

  const GaussianMap& map = scene.maps[static_cast<std::size_t>(v)];
  std::vector<Vec3> out(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    Vec3 m = map.clean_mean[i];
    if (noise.sigma_mean > 0) {
      for (int k = 0; k < 3; ++k)
        m[k] += noise.sigma_mean *
                det_normal(det_key(noise.seed, 0x7eacebu, static_cast<uint64_t>(v),
                                   i * 4 + static_cast<uint64_t>(k)));
    }
    out[i] = m;
  }
  return out;
}

}  // namespace airsplat
