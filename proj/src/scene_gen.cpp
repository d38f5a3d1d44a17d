#include "airsplat/scene_gen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "airsplat/oracles.hpp"
#include "airsplat/render.hpp"

namespace airsplat {

namespace {

// Floater eligibility margins: candidate displaced errors must clear the
// L_geo clamp (tau = 2.0) with headroom, and the excess over the teacher
// must push the rating to ~e^-11.
constexpr double kFloaterMinEps = 2.3;
constexpr double kFloaterMinExcess = 2.2;
constexpr double kGenEta = 1e-8;
constexpr double kZNear = 0.05;

Camera look_at_camera(const Vec3& center, double fov_deg, int width, int height) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = 0.5 * width / std::tan(0.5 * fov_deg * kPi / 180.0);
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  const Vec3 up{0, 1, 0};
  const Vec3 z = normalized(-center);  // look at the origin
  const Vec3 x = normalized(cross(up, z));
  const Vec3 y = cross(z, x);
  cam.pose.rotation.m = {x.x, x.y, x.z, y.x, y.y, y.z, z.x, z.y, z.z};
  cam.pose.translation = -(cam.pose.rotation * center);
  return cam;
}

struct SurfaceHit {
  double t = 0;
  Vec3 point;
  Vec3 normal;
  int face = 0;       // 0..5 box, 6..11 skybox
  double u = 0, v = 0;  // face-local coordinates in [0,1]
};

// Entry intersection with the axis-aligned cube of half-extent `half`
// (camera outside), or nullopt.
std::optional<double> ray_box_enter(const Vec3& o, const Vec3& d, double half) {
  double t_near = -1e300, t_far = 1e300;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (std::abs(o[k]) > half) return std::nullopt;
      continue;
    }
    double t0 = (-half - o[k]) / d[k];
    double t1 = (half - o[k]) / d[k];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_near <= 1e-9) return std::nullopt;
  return t_near;
}

// Exit intersection for a ray starting inside the cube.
double ray_box_exit(const Vec3& o, const Vec3& d, double half) {
  double t_far = 1e300;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-15) continue;
    const double t0 = (-half - o[k]) / d[k];
    const double t1 = (half - o[k]) / d[k];
    t_far = std::min(t_far, std::max(t0, t1));
  }
  return t_far;
}

// Face index (0..5: +x,-x,+y,-y,+z,-z) and in-face coordinates of a point on
// the cube boundary.
void face_of(const Vec3& p, double half, int& face, double& u, double& v) {
  int axis = 0;
  double best = -1;
  for (int k = 0; k < 3; ++k) {
    const double a = std::abs(p[k]) / half;
    if (a > best) {
      best = a;
      axis = k;
    }
  }
  const bool pos = p[axis] >= 0;
  face = axis * 2 + (pos ? 0 : 1);
  const int ua = (axis + 1) % 3, va = (axis + 2) % 3;
  u = std::clamp(0.5 * (p[ua] / half + 1.0), 0.0, 1.0);
  v = std::clamp(0.5 * (p[va] / half + 1.0), 0.0, 1.0);
}

SurfaceHit trace_scene(const Vec3& origin, const Vec3& dir, const SceneConfig& cfg) {
  SurfaceHit hit;
  if (auto t = ray_box_enter(origin, dir, cfg.box_half)) {
    hit.t = *t;
    hit.point = origin + *t * dir;
    face_of(hit.point, cfg.box_half, hit.face, hit.u, hit.v);
    Vec3 n{0, 0, 0};
    n[hit.face / 2] = (hit.face % 2 == 0) ? 1.0 : -1.0;
    hit.normal = n;
    return hit;
  }
  const double t = ray_box_exit(origin, dir, cfg.sky_half);
  hit.t = t;
  hit.point = origin + t * dir;
  face_of(hit.point, cfg.sky_half, hit.face, hit.u, hit.v);
  Vec3 n{0, 0, 0};
  n[hit.face / 2] = (hit.face % 2 == 0) ? -1.0 : 1.0;  // inward
  hit.normal = n;
  hit.face += 6;
  return hit;
}

Vec3 texture_color(int face, double u, double v, int cells, uint64_t seed) {
  static const Vec3 kPalette[6] = {
      {0.85, 0.35, 0.30}, {0.30, 0.70, 0.40}, {0.32, 0.45, 0.85},
      {0.85, 0.75, 0.30}, {0.70, 0.35, 0.75}, {0.35, 0.75, 0.75},
  };
  const bool sky = face >= 6;
  const Vec3 base = kPalette[face % 6];
  const int iu = std::min(cells - 1, static_cast<int>(u * cells));
  const int iv = std::min(cells - 1, static_cast<int>(v * cells));
  const double checker = ((iu + iv) % 2 == 0) ? 1.0 : 0.0;
  const uint64_t cell_key = det_key(seed, 0x7e97u, static_cast<uint64_t>(face),
                                    static_cast<uint64_t>(iu * cells + iv));
  const double tint = det_uniform(cell_key);
  const double dim = sky ? 0.45 : 1.0;
  Vec3 c = dim * ((0.42 + 0.30 * checker) * base +
                  Vec3{0.20 * u, 0.20 * v, 0.14 * (1.0 - u)} + 0.18 * tint * Vec3{1, 1, 1});
  return {std::clamp(c.x, 0.0, 1.0), std::clamp(c.y, 0.0, 1.0), std::clamp(c.z, 0.0, 1.0)};
}

// Clean-scene projection of one 3D point into a camera with full bilinear
// support; used by the floater filter and for protected-cell bookkeeping.
struct CellProj {
  bool valid = false;
  double gx = 0, gy = 0, z = 0;
  int ix = 0, iy = 0;
};

CellProj project_to_grid(const Vec3& p, const Camera& cam) {
  CellProj out;
  const Vec3 pc = cam.to_camera(p);
  if (pc.z <= kZNear) return out;
  const Vec2 uv = cam.project_cam(pc);
  const double gx = uv.x - 0.5, gy = uv.y - 0.5;
  if (gx < 0.0 || gx > cam.width - 1.0 || gy < 0.0 || gy > cam.height - 1.0) return out;
  out.valid = true;
  out.gx = gx;
  out.gy = gy;
  out.z = pc.z;
  out.ix = std::min(static_cast<int>(std::floor(gx)), cam.width - 2);
  out.iy = std::min(static_cast<int>(std::floor(gy)), cam.height - 2);
  return out;
}

Vec3 bilerp_grid(const std::vector<Vec3>& grid, int w, const CellProj& p) {
  const double fx = p.gx - p.ix, fy = p.gy - p.iy;
  const Vec3& m00 = grid[static_cast<std::size_t>(p.iy) * w + p.ix];
  const Vec3& m01 = grid[static_cast<std::size_t>(p.iy) * w + p.ix + 1];
  const Vec3& m10 = grid[(static_cast<std::size_t>(p.iy) + 1) * w + p.ix];
  const Vec3& m11 = grid[(static_cast<std::size_t>(p.iy) + 1) * w + p.ix + 1];
  return (1 - fy) * ((1 - fx) * m00 + fx * m01) + fy * ((1 - fx) * m10 + fx * m11);
}

}  // namespace

Scene generate_scene(const SceneConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (!(cfg.camera_height + 0.35 < cfg.orbit_radius))
    throw ConfigError("scene config: camera_height too large for orbit_radius");

  Scene scene;
  const int v_count = cfg.context_views;
  const int h = cfg.height, w = cfg.width;
  const std::size_t hw = static_cast<std::size_t>(h) * w;

  // Context cameras on a sphere of radius orbit_radius (so camera centers sit
  // at exactly that distance from the origin); targets interleaved at a
  // different height.
  for (int v = 0; v < v_count; ++v) {
    const double angle = 2.0 * kPi * v / v_count;
    const double hh = cfg.camera_height;
    const double rho = std::sqrt(cfg.orbit_radius * cfg.orbit_radius - hh * hh);
    scene.context_cameras.push_back(look_at_camera(
        {rho * std::cos(angle), hh, rho * std::sin(angle)}, cfg.fov_deg, w, h));
  }
  for (int t = 0; t < cfg.target_views; ++t) {
    const double angle = 2.0 * kPi * (t + 0.37) / cfg.target_views + 0.13;
    const double hh = cfg.camera_height + 0.3;
    const double rho = std::sqrt(cfg.orbit_radius * cfg.orbit_radius - hh * hh);
    scene.target_cameras.push_back(look_at_camera(
        {rho * std::cos(angle), hh, rho * std::sin(angle)}, cfg.fov_deg, w, h));
  }

  // Pixel-aligned clean maps.
  std::vector<std::vector<double>> hit_ts(static_cast<std::size_t>(v_count));
  for (int v = 0; v < v_count; ++v) {
    const Camera& cam = scene.context_cameras[static_cast<std::size_t>(v)];
    const Vec3 origin = cam.center();
    GaussianMap map;
    map.view_index = v;
    map.height = h;
    map.width = w;
    map.prims.resize(hw);
    map.floater.assign(hw, 0);
    map.clean_mean.resize(hw);
    hit_ts[static_cast<std::size_t>(v)].resize(hw);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * w + c;
        const Vec3 dir = cam.pixel_ray(r, c);
        const SurfaceHit hit = trace_scene(origin, dir, cfg);
        GaussianPrimitive& p = map.prims[i];
        p.mean = hit.point;
        p.color = texture_color(hit.face, hit.u, hit.v, cfg.texture_cells, seed);
        const double px_world = hit.t / cam.fx;  // world size of one pixel at depth
        p.scale = {cfg.sigma_tangent * px_world, cfg.sigma_tangent * px_world,
                   cfg.sigma_normal * px_world};
        p.rotation = quat_from_two_vectors({0, 0, 1}, hit.normal);
        p.opacity = cfg.alpha_min +
                    (cfg.alpha_max - cfg.alpha_min) *
                        det_uniform(det_key(seed, 0xa1fa5u, static_cast<uint64_t>(v), i));
        map.clean_mean[i] = hit.point;
        hit_ts[static_cast<std::size_t>(v)][i] = hit.t;
      }
    scene.maps.push_back(std::move(map));
  }

  // Ground-truth images come from the uncorrupted scene.
  {
    const PrimitiveSoA clean = flatten(scene);
    RenderConfig rc;
    for (const Camera& cam : scene.target_cameras)
      scene.target_images.push_back(render(clean, cam, rc).color);
    for (const Camera& cam : scene.context_cameras)
      scene.context_images.push_back(render(clean, cam, rc).color);
  }

  // Imperfect initial head: color/mean noise applied after the ground-truth
  // renders, so the GT images stay clean while the trainable init is not.
  if (cfg.init_mean_noise > 0) {
    for (int v = 0; v < v_count; ++v) {
      GaussianMap& map = scene.maps[static_cast<std::size_t>(v)];
      for (std::size_t i = 0; i < hw; ++i)
        for (int ch = 0; ch < 3; ++ch)
          map.prims[i].mean[ch] +=
              cfg.init_mean_noise *
              det_normal(det_key(seed, 0x3ea42u, static_cast<uint64_t>(v),
                                 i * 4 + static_cast<uint64_t>(ch)));
    }
  }
  if (cfg.init_color_noise > 0) {
    for (int v = 0; v < v_count; ++v) {
      GaussianMap& map = scene.maps[static_cast<std::size_t>(v)];
      for (std::size_t i = 0; i < hw; ++i)
        for (int ch = 0; ch < 3; ++ch) {
          double& c = map.prims[i].color[ch];
          c += cfg.init_color_noise *
               det_normal(det_key(seed, 0xc0105u, static_cast<uint64_t>(v),
                                  i * 4 + static_cast<uint64_t>(ch)));
          c = std::clamp(c, 0.0, 1.0);
        }
    }
  }

  // Floater injection.
  const std::size_t want =
      static_cast<std::size_t>(std::floor(cfg.floater_fraction * v_count * hw));
  if (want == 0) return scene;

  struct ViewGeom {
    int partner = -1;
    std::vector<CellProj> clean_proj;  // per cell, into the partner view
    double median = 0, med_lo = 0, med_hi = 0;
  };
  std::vector<ViewGeom> geom(static_cast<std::size_t>(v_count));
  std::vector<std::vector<uint8_t>> blocked(static_cast<std::size_t>(v_count));
  for (auto& b : blocked) b.assign(hw, 0);

  const bool have_pairs = v_count >= 2;
  if (have_pairs) {
    for (int v = 0; v < v_count; ++v) {
      ViewGeom& g = geom[static_cast<std::size_t>(v)];
      g.partner = partner_view(v, v_count);
      const Camera& pcam = scene.context_cameras[static_cast<std::size_t>(g.partner)];
      g.clean_proj.resize(hw);
      std::vector<double> depths;
      for (std::size_t i = 0; i < hw; ++i) {
        const CellProj cp =
            project_to_grid(scene.maps[static_cast<std::size_t>(v)].clean_mean[i], pcam);
        g.clean_proj[i] = cp;
        if (!cp.valid) continue;
        depths.push_back(cp.z);
        // Any cell a partner primitive samples must stay floater-free.
        blocked[static_cast<std::size_t>(g.partner)]
               [static_cast<std::size_t>(cp.iy) * w + cp.ix] = 1;
        blocked[static_cast<std::size_t>(g.partner)]
               [static_cast<std::size_t>(cp.iy) * w + cp.ix + 1] = 1;
        blocked[static_cast<std::size_t>(g.partner)]
               [(static_cast<std::size_t>(cp.iy) + 1) * w + cp.ix] = 1;
        blocked[static_cast<std::size_t>(g.partner)]
               [(static_cast<std::size_t>(cp.iy) + 1) * w + cp.ix + 1] = 1;
      }
      std::sort(depths.begin(), depths.end());
      if (!depths.empty()) {
        const std::size_t m = depths.size();
        g.med_lo = depths[(m - 1) / 2];
        g.med_hi = depths[m / 2];
        g.median = 0.5 * (g.med_lo + g.med_hi);
      }
    }
  }

  // Candidate order is a seeded shuffle of every cell.
  std::vector<std::size_t> cells(static_cast<std::size_t>(v_count) * hw);
  std::iota(cells.begin(), cells.end(), 0);
  SeqRng rng(hash_combine(seed, 0xf70a7e5ull));
  for (std::size_t i = cells.size(); i > 1; --i)
    std::swap(cells[i - 1], cells[rng.below(i)]);

  // Displacement multiples of floater_offset: positive rungs move toward the
  // camera (visible free-space floaters), negative ones push past the surface
  // until the normalized error clears the margins.
  const double ladder[10] = {1.0, 1.6, 2.4, 3.2, 0.7, -4.0, -8.0, -13.0, -20.0, -30.0};
  std::size_t placed = 0;
  std::size_t rej_blocked = 0, rej_cleaninv = 0, rej_dispinv = 0, rej_median = 0,
              rej_support = 0, rej_margin = 0;

  for (std::size_t cand : cells) {
    if (placed >= want) break;
    const int v = static_cast<int>(cand / hw);
    const std::size_t i = cand % hw;
    GaussianMap& map = scene.maps[static_cast<std::size_t>(v)];
    if (map.floater[i]) continue;

    const Camera& cam = scene.context_cameras[static_cast<std::size_t>(v)];
    const Vec3 origin = cam.center();
    const int r = static_cast<int>(i) / w, c = static_cast<int>(i) % w;
    const Vec3 dir = cam.pixel_ray(r, c);
    const double t_hit = hit_ts[static_cast<std::size_t>(v)][i];

    if (!have_pairs) {
      // No pairing: inject the plain along-ray displacement.
      map.prims[i].mean = origin + (t_hit - cfg.floater_offset) * dir;
      map.floater[i] = 1;
      ++placed;
      continue;
    }

    const ViewGeom& g = geom[static_cast<std::size_t>(v)];
    const Camera& pcam = scene.context_cameras[static_cast<std::size_t>(g.partner)];
    const GaussianMap& pmap = scene.maps[static_cast<std::size_t>(g.partner)];

    if (!cfg.strict_floaters) {
      // Loose placement: first ladder entry with a valid partner projection,
      // falling back to the plain displacement.
      double t_f = t_hit - ladder[0] * cfg.floater_offset;
      for (double mult : ladder) {
        const double t_try = t_hit - mult * cfg.floater_offset;
        if (project_to_grid(origin + t_try * dir, pcam).valid) {
          t_f = t_try;
          break;
        }
      }
      map.prims[i].mean = origin + t_f * dir;
      map.floater[i] = 1;
      ++placed;
      continue;
    }

    if (blocked[static_cast<std::size_t>(v)][i]) { ++rej_blocked; continue; }
    const CellProj& clean_cp = g.clean_proj[i];
    if (!clean_cp.valid) { ++rej_cleaninv; continue; }  // teacher baseline must exist

    // Teacher-side error at this cell (clean protocol).
    const Vec3 clean_sample = bilerp_grid(pmap.clean_mean, w, clean_cp);
    const double eps_teacher =
        norm(map.clean_mean[i] - clean_sample) / (g.median + kGenEta);

    for (double mult : ladder) {
      const double t_f = t_hit - mult * cfg.floater_offset;
      const Vec3 displaced = origin + t_f * dir;
      const CellProj dp = project_to_grid(displaced, pcam);
      if (!dp.valid) { ++rej_dispinv; continue; }
      // The pair's median depth must be bitwise preserved: both the clean and
      // displaced projected depths must sit strictly on the same side of the
      // middle order statistics.
      const bool below = clean_cp.z < g.med_lo && dp.z < g.med_lo;
      const bool above = clean_cp.z > g.med_hi && dp.z > g.med_hi;
      if (!below && !above) { ++rej_median; continue; }
      // The floater's own sample must not touch floater cells (now or later).
      const std::size_t s00 = static_cast<std::size_t>(dp.iy) * w + dp.ix;
      const std::size_t s01 = s00 + 1;
      const std::size_t s10 = s00 + static_cast<std::size_t>(w);
      const std::size_t s11 = s10 + 1;
      if (pmap.floater[s00] || pmap.floater[s01] || pmap.floater[s10] ||
          pmap.floater[s11]) { ++rej_support; continue; }
      const Vec3 sample = bilerp_grid(pmap.clean_mean, w, dp);
      const double eps = norm(displaced - sample) / (g.median + kGenEta);
      if (eps < kFloaterMinEps || eps - eps_teacher < kFloaterMinExcess) { ++rej_margin; continue; }

      map.prims[i].mean = displaced;
      map.floater[i] = 1;
      auto& pblocked = blocked[static_cast<std::size_t>(g.partner)];
      pblocked[s00] = pblocked[s01] = pblocked[s10] = pblocked[s11] = 1;
      ++placed;
      break;
    }
  }

  if (placed < want)
    throw ConfigError("generate_scene: floater_fraction too high for this geometry (" +
                      std::to_string(placed) + " of " + std::to_string(want) +
                      " placeable; rejected: blocked " + std::to_string(rej_blocked) +
                      ", clean-invalid " + std::to_string(rej_cleaninv) +
                      ", displaced-invalid " + std::to_string(rej_dispinv) +
                      ", median " + std::to_string(rej_median) + ", support " +
                      std::to_string(rej_support) + ", margin " + std::to_string(rej_margin) +
                      ")");
  return scene;
}

}  // namespace airsplat
