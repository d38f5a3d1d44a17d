#include "airsplat/rom.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace airsplat {

namespace {

uint64_t fnv_mix(uint64_t h, uint64_t x) { return (h ^ x) * 0x100000001b3ull; }

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void RomParams::validate() const {
  if (!(eta > 0)) throw ConfigError("rom: eta must be positive");
  if (!(lambda_decay > 0)) throw ConfigError("rom: lambda_decay must be positive");
  if (!(tau > 0)) throw ConfigError("rom: tau must be positive");
}

GeoErrorResult geometric_error(const std::vector<Vec3>& means_query,
                               const std::vector<Vec3>& map_values,
                               const Camera& cam, double eta, double z_near,
                               double median_override) {
  if (!(eta > 0)) throw ConfigError("geometric_error: eta must be positive");
  const int h = cam.height, w = cam.width;
  if (map_values.size() != static_cast<std::size_t>(h) * w)
    throw ShapeMismatchError("geometric_error: map size does not match camera");

  const std::size_t n = means_query.size();
  GeoErrorResult out;
  out.eps.assign(n, 0.0);
  out.valid.assign(n, 0);
  out.d_eps_d_mean.assign(n, Vec3{});
  out.proj_depth.assign(n, 0.0);

  struct Hit {
    double gx, gy;
    int ix, iy;
    Vec3 pc;
    Vec3 residual;
    double num;
  };
  std::vector<Hit> hits(n);

  uint64_t digest = 0xcbf29ce484222325ull;
  std::vector<double> depths;
  depths.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Hit& hit = hits[i];
    hit.pc = cam.to_camera(means_query[i]);
    bool ok = hit.pc.z > z_near;
    if (ok) {
      const Vec2 uv = cam.project_cam(hit.pc);
      hit.gx = uv.x - 0.5;
      hit.gy = uv.y - 0.5;
      ok = hit.gx >= 0.0 && hit.gx <= w - 1.0 && hit.gy >= 0.0 && hit.gy <= h - 1.0;
    }
    if (!ok) {
      digest = fnv_mix(digest, i * 2 + 0);
      continue;
    }
    hit.ix = std::min(static_cast<int>(std::floor(hit.gx)), w - 2);
    hit.iy = std::min(static_cast<int>(std::floor(hit.gy)), h - 2);
    out.valid[i] = 1;
    out.proj_depth[i] = hit.pc.z;
    depths.push_back(hit.pc.z);
    digest = fnv_mix(digest, i * 2 + 1);
    digest = fnv_mix(digest, static_cast<uint64_t>(hit.iy) * 131071u +
                                 static_cast<uint64_t>(hit.ix) + 7u);
  }
  out.digest = digest;
  out.median_depth = median_override >= 0.0 ? median_override : median_of(depths);
  const double denom = out.median_depth + eta;

  for (std::size_t i = 0; i < n; ++i) {
    if (!out.valid[i]) continue;
    Hit& hit = hits[i];
    const double fx = hit.gx - hit.ix;
    const double fy = hit.gy - hit.iy;
    const Vec3& m00 = map_values[static_cast<std::size_t>(hit.iy) * w + hit.ix];
    const Vec3& m01 = map_values[static_cast<std::size_t>(hit.iy) * w + hit.ix + 1];
    const Vec3& m10 = map_values[(static_cast<std::size_t>(hit.iy) + 1) * w + hit.ix];
    const Vec3& m11 = map_values[(static_cast<std::size_t>(hit.iy) + 1) * w + hit.ix + 1];
    const Vec3 sampled = (1 - fy) * ((1 - fx) * m00 + fx * m01) +
                         fy * ((1 - fx) * m10 + fx * m11);
    hit.residual = means_query[i] - sampled;
    hit.num = norm(hit.residual);
    out.eps[i] = hit.num / denom;

    if (hit.num > 1e-300) {
      const Vec3 rhat = (1.0 / hit.num) * hit.residual;
      const Vec3 dm_dgx = (1 - fy) * (m01 - m00) + fy * (m11 - m10);
      const Vec3 dm_dgy = (1 - fx) * (m10 - m00) + fx * (m11 - m01);
      // d(gx, gy)/d(cam point) is the perspective Jacobian.
      const double z = hit.pc.z, z2 = z * z;
      const double j00 = cam.fx / z, j02 = -cam.fx * hit.pc.x / z2;
      const double j11 = cam.fy / z, j12 = -cam.fy * hit.pc.y / z2;
      const double a_gx = dot(dm_dgx, rhat);
      const double a_gy = dot(dm_dgy, rhat);
      // chain through the sampling location, then to world frame
      const Vec3 d_pc{a_gx * j00, a_gy * j11, a_gx * j02 + a_gy * j12};
      const Vec3 dnum = rhat - transpose(cam.pose.rotation) * d_pc;
      out.d_eps_d_mean[i] = (1.0 / denom) * dnum;
    }
  }
  return out;
}

RatingField teacher_rating(const std::vector<double>& eps_student,
                           const std::vector<double>& eps_teacher,
                           const std::vector<uint8_t>& valid, double lambda) {
  if (eps_student.size() != eps_teacher.size() || eps_student.size() != valid.size())
    throw LengthMismatchError("teacher_rating: length mismatch");
  if (!(lambda > 0)) throw ConfigError("teacher_rating: lambda must be positive");
  RatingField field;
  const std::size_t n = eps_student.size();
  field.eps_student = eps_student;
  field.eps_teacher = eps_teacher;
  field.excess.assign(n, 0.0);
  field.rating.assign(n, 1.0);
  field.valid = valid;
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    ++field.n_valid;
    field.excess[i] = std::max(0.0, eps_student[i] - eps_teacher[i]);
    field.rating[i] = std::exp(-lambda * field.excess[i]);
  }
  return field;
}

OpacityLoss opacity_matching_loss(const std::vector<double>& alpha,
                                  const RatingField& ratings) {
  if (alpha.size() != ratings.rating.size())
    throw LengthMismatchError("opacity_matching_loss: length mismatch");
  OpacityLoss out;
  out.d_alpha.assign(alpha.size(), 0.0);
  if (ratings.n_valid == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(ratings.n_valid);
  const double sign = romdebug::negate_opa_grad() ? -1.0 : 1.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!ratings.valid[i]) continue;
    const double hinge = std::max(0.0, alpha[i] - ratings.rating[i]);
    acc += hinge * hinge;
    out.d_alpha[i] = sign * 2.0 * inv_n * hinge;
  }
  out.loss = acc * inv_n;
  return out;
}

SpatialGeoLoss spatial_geo_loss(const std::vector<double>& sg_alpha,
                                const GeoErrorResult& err, double tau) {
  if (sg_alpha.size() != err.eps.size())
    throw LengthMismatchError("spatial_geo_loss: length mismatch");
  if (!(tau > 0)) throw ConfigError("spatial_geo_loss: tau must be positive");
  SpatialGeoLoss out;
  out.d_mean.assign(sg_alpha.size(), Vec3{});
  int n_valid = 0;
  for (uint8_t v : err.valid) n_valid += v;
  if (n_valid == 0) return out;
  const double inv_n = 1.0 / n_valid;
  double acc = 0.0;
  for (std::size_t i = 0; i < sg_alpha.size(); ++i) {
    if (!err.valid[i]) continue;
    acc += sg_alpha[i] * std::min(err.eps[i], tau);
    if (err.eps[i] < tau) out.d_mean[i] = (sg_alpha[i] * inv_n) * err.d_eps_d_mean[i];
  }
  out.loss = acc * inv_n;
  return out;
}

RomFrozen RomResult::make_frozen(const PrimitiveSoA& soa) const {
  RomFrozen f;
  f.sample_means = soa.mean;
  f.sg_alpha = soa.opacity;
  f.rating = field.rating;
  f.rating_valid = field.valid;
  f.median_student = median_student;
  return f;
}

RomResult rom_losses(const Scene& scene, const PrimitiveSoA& soa,
                     const TeacherNoise& teacher, const RomParams& params,
                     const RomFrozen* frozen) {
  params.validate();
  const int views = scene.view_count();
  if (views < 2) throw InsufficientViewsError("rom_losses: need at least 2 context views");
  const int hw = soa.height * soa.width;
  const std::size_t n = static_cast<std::size_t>(soa.n);

  RomResult out;
  out.field.eps_student.assign(n, 0.0);
  out.field.eps_teacher.assign(n, 0.0);
  out.field.excess.assign(n, 0.0);
  out.field.rating.assign(n, 1.0);
  out.field.valid.assign(n, 0);
  out.d_alpha.assign(n, 0.0);
  out.d_mean.assign(3 * n, 0.0);
  out.median_student.assign(static_cast<std::size_t>(views), 0.0);

  uint64_t digest = 0x9e3779b97f4a7c15ull;
  std::vector<GeoErrorResult> student_err(static_cast<std::size_t>(views));

  for (int v = 0; v < views; ++v) {
    const int vp = partner_view(v, views);
    const Camera& cam = scene.context_cameras[static_cast<std::size_t>(vp)];

    std::vector<Vec3> query(static_cast<std::size_t>(hw));
    for (int i = 0; i < hw; ++i) query[static_cast<std::size_t>(i)] = soa.mean_at(v * hw + i);

    std::vector<Vec3> map_vals(static_cast<std::size_t>(hw));
    const std::vector<double>& src = frozen ? frozen->sample_means : soa.mean;
    for (int i = 0; i < hw; ++i) {
      const int flat = vp * hw + i;
      map_vals[static_cast<std::size_t>(i)] = {src[3 * flat], src[3 * flat + 1],
                                               src[3 * flat + 2]};
    }

    const double med_override =
        frozen ? frozen->median_student[static_cast<std::size_t>(v)] : -1.0;
    student_err[static_cast<std::size_t>(v)] = geometric_error(
        query, map_vals, cam, params.eta, params.z_near, med_override);
    out.median_student[static_cast<std::size_t>(v)] =
        student_err[static_cast<std::size_t>(v)].median_depth;

    const std::vector<Vec3> tm_query = teacher_means(teacher, scene, {v, vp});
    const std::vector<Vec3> tm_map = teacher_means(teacher, scene, {vp, v});
    const GeoErrorResult teach =
        geometric_error(tm_query, tm_map, cam, params.eta, params.z_near);

    const GeoErrorResult& stud = student_err[static_cast<std::size_t>(v)];
    for (int i = 0; i < hw; ++i) {
      const std::size_t flat = static_cast<std::size_t>(v * hw + i);
      if (!stud.valid[static_cast<std::size_t>(i)] || !teach.valid[static_cast<std::size_t>(i)])
        continue;
      out.field.valid[flat] = 1;
      out.field.eps_student[flat] = stud.eps[static_cast<std::size_t>(i)];
      out.field.eps_teacher[flat] = teach.eps[static_cast<std::size_t>(i)];
      out.field.excess[flat] =
          std::max(0.0, out.field.eps_student[flat] - out.field.eps_teacher[flat]);
      out.field.rating[flat] = std::exp(-params.lambda_decay * out.field.excess[flat]);
    }
    digest = fnv_mix(digest, stud.digest);
  }

  // Population shared by both losses: student&teacher valid, and rated at the
  // frozen base point when finite differencing.
  int n_pop = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.field.valid[i]) continue;
    if (frozen && !frozen->rating_valid[i]) {
      out.field.valid[i] = 0;
      continue;
    }
    ++n_pop;
  }
  out.field.n_valid = n_pop;
  if (n_pop == 0) return out;

  const double inv_n = 1.0 / n_pop;
  const double opa_sign = romdebug::negate_opa_grad() ? -1.0 : 1.0;
  for (int v = 0; v < views; ++v) {
    const GeoErrorResult& stud = student_err[static_cast<std::size_t>(v)];
    for (int i = 0; i < hw; ++i) {
      const std::size_t flat = static_cast<std::size_t>(v * hw + i);
      if (!out.field.valid[flat]) continue;
      const double rating = frozen ? frozen->rating[flat] : out.field.rating[flat];
      const double sg_alpha = frozen ? frozen->sg_alpha[flat] : soa.opacity[flat];
      const double alpha = soa.opacity[flat];

      const double hinge = std::max(0.0, alpha - rating);
      out.loss_opa += hinge * hinge * inv_n;
      out.d_alpha[flat] = opa_sign * 2.0 * inv_n * hinge;

      // Teacher-floored spatial term: min(max(eps, eps_teacher), tau). The
      // raw min(eps, tau) keeps a constant-magnitude norm gradient at
      // consensus, so direct primitive optimization would never become
      // stationary; flooring at the teacher's own error makes primitives
      // that already match or beat the teacher exactly inert, mirroring the
      // one-sided opacity matching.
      const double eps = stud.eps[static_cast<std::size_t>(i)];
      const double eps_teacher = out.field.eps_teacher[flat];
      const bool deviant = eps > eps_teacher;
      const double eps_eff = deviant ? eps : eps_teacher;
      out.loss_geo += sg_alpha * std::min(eps_eff, params.tau) * inv_n;
      if (deviant && eps < params.tau) {
        const Vec3 g = (sg_alpha * inv_n) * stud.d_eps_d_mean[static_cast<std::size_t>(i)];
        out.d_mean[3 * flat] = g.x;
        out.d_mean[3 * flat + 1] = g.y;
        out.d_mean[3 * flat + 2] = g.z;
      }
      digest = fnv_mix(digest, flat * 8 + (hinge > 0 ? 1 : 0) +
                                   (eps > params.tau ? 2 : 0) + (deviant ? 4 : 0));
    }
  }
  out.digest = digest;
  return out;
}

namespace romdebug {

namespace {
std::atomic<bool> g_negate{false};
}

void set_negate_opa_grad(bool on) { g_negate.store(on); }
bool negate_opa_grad() { return g_negate.load(); }

}  // namespace romdebug

}  // namespace airsplat
