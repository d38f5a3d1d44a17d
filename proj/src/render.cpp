#include "airsplat/render.hpp"

#include <algorithm>
#include <cmath>

#include "airsplat/kernels.hpp"

namespace airsplat {

namespace {

constexpr double kCovFloor = 0.3;  // low-pass floor added to cov2d
constexpr double kCutoffQ = 9.0;   // 3-sigma footprint: d^T conic d <= 9

enum class PrimStatus : uint8_t { kLive, kBehind, kDegenerate, kOffscreen };

struct PrimProj {
  double mx = 0, my = 0;       // mean2d
  double ca = 0, cb = 0, cc = 0;  // conic
  double z = 0;
  int r0 = 0, r1 = -1, c0 = 0, c1 = -1;  // inclusive pixel bbox
  PrimStatus status = PrimStatus::kOffscreen;
};

struct CamFrame {
  Vec3 pc;     // camera-frame mean
  Sym2 cov2d;  // before conic inversion
};

// Camera-frame covariance and EWA-projected 2D covariance for one primitive.
CamFrame cam_frame(const Vec3& mean, const Mat3& cov3d, const Camera& cam) {
  CamFrame f;
  f.pc = cam.to_camera(mean);
  const Mat3& w = cam.pose.rotation;
  const Mat3 v = w * cov3d * transpose(w);
  const double x = f.pc.x, y = f.pc.y, z = f.pc.z;
  const double j00 = cam.fx / z, j02 = -cam.fx * x / (z * z);
  const double j11 = cam.fy / z, j12 = -cam.fy * y / (z * z);
  // cov2d = J V J^T with J = [[j00, 0, j02], [0, j11, j12]]
  const double t00 = j00 * v(0, 0) + j02 * v(2, 0);
  const double t01 = j00 * v(0, 1) + j02 * v(2, 1);
  const double t02 = j00 * v(0, 2) + j02 * v(2, 2);
  const double t10 = j11 * v(1, 0) + j12 * v(2, 0);
  const double t11 = j11 * v(1, 1) + j12 * v(2, 1);
  const double t12 = j11 * v(1, 2) + j12 * v(2, 2);
  f.cov2d.a = t00 * j00 + t02 * j02 + kCovFloor;
  f.cov2d.b = t00 * 0 + t01 * j11 + t02 * j12;
  f.cov2d.c = t10 * 0 + t11 * j11 + t12 * j12 + kCovFloor;
  return f;
}

void project_all(const PrimitiveSoA& soa, const Camera& cam, double z_near,
                 std::vector<PrimProj>& proj) {
  proj.assign(static_cast<std::size_t>(soa.n), PrimProj{});
  parallel_for(static_cast<std::size_t>(soa.n), 2048, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      PrimProj& p = proj[i];
      const CamFrame f = cam_frame(soa.mean_at(static_cast<int>(i)), soa.cov3d[i], cam);
      if (f.pc.z <= z_near) {
        p.status = PrimStatus::kBehind;
        continue;
      }
      const auto conic = detail::conic_of(f.cov2d);
      if (!conic) {
        p.status = PrimStatus::kDegenerate;
        continue;
      }
      p.z = f.pc.z;
      const Vec2 m2 = cam.project_cam(f.pc);
      p.mx = m2.x;
      p.my = m2.y;
      p.ca = conic->a;
      p.cb = conic->b;
      p.cc = conic->c;
      const double ext_x = 3.0 * std::sqrt(f.cov2d.a);
      const double ext_y = 3.0 * std::sqrt(f.cov2d.c);
      p.c0 = std::max(0, static_cast<int>(std::ceil(p.mx - ext_x - 0.5)));
      p.c1 = std::min(cam.width - 1, static_cast<int>(std::floor(p.mx + ext_x - 0.5)));
      p.r0 = std::max(0, static_cast<int>(std::ceil(p.my - ext_y - 0.5)));
      p.r1 = std::min(cam.height - 1, static_cast<int>(std::floor(p.my + ext_y - 0.5)));
      p.status = (p.c0 <= p.c1 && p.r0 <= p.r1) ? PrimStatus::kLive : PrimStatus::kOffscreen;
    }
  });
}

struct RowEntry {
  int32_t col;
  ContribEntry e;
};

}  // namespace

namespace detail {

std::optional<Sym2> conic_of(const Sym2& cov2d) {
  const double d = cov2d.det();
  if (d < 1e-12) return std::nullopt;
  return sym2_inverse(cov2d);
}

}  // namespace detail

ProjectedGaussian project_ewa(const GaussianPrimitive& prim, const Camera& cam,
                              double z_near) {
  const CamFrame f = cam_frame(prim.mean, covariance_of(prim), cam);
  if (f.pc.z <= z_near)
    throw BehindCameraError("project_ewa: primitive at or behind z_near");
  ProjectedGaussian out;
  out.mean2d = cam.project_cam(f.pc);
  out.cov2d = f.cov2d;
  out.z = f.pc.z;
  return out;
}

uint64_t RenderTarget::structure_digest() const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](uint64_t x) { h = (h ^ x) * 0x100000001b3ull; };
  mix(static_cast<uint64_t>(entries.size()));
  for (const auto& e : entries) mix(static_cast<uint64_t>(e.prim) + 1);
  for (int32_t o : offsets) mix(static_cast<uint64_t>(o) * 0x9e3779b97f4a7c15ull);
  mix(static_cast<uint64_t>(degenerate_skipped));
  mix(static_cast<uint64_t>(behind_skipped));
  return h;
}

RenderTarget render(const PrimitiveSoA& soa, const Camera& cam,
                    const RenderConfig& config) {
  cam.validate();
  const int h = cam.height, w = cam.width;
  RenderTarget out;
  out.camera = cam;
  out.config = config;
  out.n_prims = soa.n;
  out.color = Image(h, w);
  out.depth.assign(static_cast<std::size_t>(h) * w, 0.0);
  out.transmittance.assign(static_cast<std::size_t>(h) * w, 1.0);
  out.offsets.assign(static_cast<std::size_t>(h) * w + 1, 0);

  std::vector<PrimProj> proj;
  project_all(soa, cam, config.z_near, proj);

  std::vector<int32_t> order;
  order.reserve(proj.size());
  for (std::size_t i = 0; i < proj.size(); ++i) {
    switch (proj[i].status) {
      case PrimStatus::kLive:
        order.push_back(static_cast<int32_t>(i));
        break;
      case PrimStatus::kBehind:
        ++out.behind_skipped;
        break;
      case PrimStatus::kDegenerate:
        ++out.degenerate_skipped;
        break;
      case PrimStatus::kOffscreen:
        break;
    }
  }
  std::sort(order.begin(), order.end(), [&proj](int32_t a, int32_t b) {
    if (proj[a].z != proj[b].z) return proj[a].z < proj[b].z;
    return a < b;
  });

  // Depth-ordered per-row bins.
  std::vector<std::vector<int32_t>> row_bins(static_cast<std::size_t>(h));
  for (int32_t idx : order)
    for (int r = proj[idx].r0; r <= proj[idx].r1; ++r)
      row_bins[static_cast<std::size_t>(r)].push_back(idx);

  // Per-row outputs, concatenated in row order afterwards.
  std::vector<std::vector<ContribEntry>> row_entries(static_cast<std::size_t>(h));
  std::vector<std::vector<int32_t>> row_counts(static_cast<std::size_t>(h));

  parallel_for(static_cast<std::size_t>(h), 4, [&](std::size_t rlo, std::size_t rhi) {
    std::vector<RowEntry> raw;
    std::vector<double> qbuf, gbuf;
    std::vector<int32_t> colbuf;
    for (std::size_t r = rlo; r < rhi; ++r) {
      raw.clear();
      const double py = static_cast<double>(r) + 0.5;
      for (int32_t idx : row_bins[r]) {
        const PrimProj& p = proj[idx];
        if (static_cast<int>(r) < p.r0 || static_cast<int>(r) > p.r1) continue;
        const double dy = py - p.my;
        qbuf.clear();
        colbuf.clear();
        for (int c = p.c0; c <= p.c1; ++c) {
          const double dx = (c + 0.5) - p.mx;
          const double q = p.ca * dx * dx + 2.0 * p.cb * dx * dy + p.cc * dy * dy;
          if (q <= kCutoffQ) {
            qbuf.push_back(q);
            colbuf.push_back(c);
          }
        }
        if (qbuf.empty()) continue;
        gbuf.resize(qbuf.size());
        kernels::active().exp_neg_half(qbuf.data(), gbuf.data(), qbuf.size());
        for (std::size_t k = 0; k < colbuf.size(); ++k)
          raw.push_back({colbuf[k], {idx, gbuf[k]}});
      }

      // Counting sort by column keeps the per-pixel depth order.
      auto& counts = row_counts[r];
      counts.assign(static_cast<std::size_t>(w), 0);
      for (const RowEntry& re : raw) ++counts[static_cast<std::size_t>(re.col)];
      std::vector<int32_t> pos(static_cast<std::size_t>(w) + 1, 0);
      for (int c = 0; c < w; ++c) pos[static_cast<std::size_t>(c) + 1] =
          pos[static_cast<std::size_t>(c)] + counts[static_cast<std::size_t>(c)];
      auto& sorted = row_entries[r];
      sorted.assign(raw.size(), ContribEntry{});
      {
        std::vector<int32_t> cursor(pos.begin(), pos.end() - 1);
        for (const RowEntry& re : raw)
          sorted[static_cast<std::size_t>(cursor[static_cast<std::size_t>(re.col)]++)] = re.e;
      }

      // Front-to-back blending per pixel.
      for (int c = 0; c < w; ++c) {
        double t = 1.0;
        Vec3 rgb{0, 0, 0};
        double depth_acc = 0.0, wsum = 0.0;
        for (int32_t k = pos[static_cast<std::size_t>(c)]; k < pos[static_cast<std::size_t>(c) + 1]; ++k) {
          const ContribEntry& e = sorted[static_cast<std::size_t>(k)];
          const double a = soa.opacity[static_cast<std::size_t>(e.prim)] * e.g;
          const double wgt = a * t;
          rgb += wgt * soa.color_at(e.prim);
          depth_acc += wgt * proj[static_cast<std::size_t>(e.prim)].z;
          wsum += wgt;
          t *= (1.0 - a);
        }
        rgb += t * config.background;
        const std::size_t pix = r * static_cast<std::size_t>(w) + static_cast<std::size_t>(c);
        out.color.data[3 * pix] = rgb.x;
        out.color.data[3 * pix + 1] = rgb.y;
        out.color.data[3 * pix + 2] = rgb.z;
        out.depth[pix] = wsum > 1e-300 ? depth_acc / wsum : 0.0;
        out.transmittance[pix] = t;
      }
    }
  });

  // CSR assembly in fixed row-major order.
  std::size_t total = 0;
  for (int r = 0; r < h; ++r) {
    const auto& counts = row_counts[static_cast<std::size_t>(r)];
    for (int c = 0; c < w; ++c) {
      out.offsets[static_cast<std::size_t>(r) * w + c] = static_cast<int32_t>(total);
      total += static_cast<std::size_t>(counts[static_cast<std::size_t>(c)]);
    }
  }
  out.offsets.back() = static_cast<int32_t>(total);
  out.entries.resize(total);
  std::size_t at = 0;
  for (int r = 0; r < h; ++r) {
    const auto& re = row_entries[static_cast<std::size_t>(r)];
    std::copy(re.begin(), re.end(), out.entries.begin() + static_cast<long>(at));
    at += re.size();
  }
  return out;
}

RenderGrad render_backward(const RenderTarget& target, const PrimitiveSoA& soa,
                           const std::vector<double>& d_color_image) {
  const Camera& cam = target.camera;
  const int h = cam.height, w = cam.width;
  if (d_color_image.size() != static_cast<std::size_t>(h) * w * 3)
    throw ShapeMismatchError("render_backward: d_color_image size mismatch");
  if (target.n_prims != soa.n)
    throw ShapeMismatchError("render_backward: SoA does not match target");

  RenderGrad grad;
  grad.d_opacity.assign(static_cast<std::size_t>(soa.n), 0.0);
  grad.d_color.assign(static_cast<std::size_t>(soa.n) * 3, 0.0);
  grad.d_mean.assign(static_cast<std::size_t>(soa.n) * 3, 0.0);
  if (target.entries.empty()) return grad;

  std::vector<PrimProj> proj;
  project_all(soa, cam, target.config.z_near, proj);

  // Per-entry contributions (slot writes; reduced serially afterwards).
  struct EntryGrad {
    double d_alpha;
    double d_color[3];
    double d_m2d[2];
    double d_conic[3];  // (aa, ab, cc) against full-matrix calculus
  };
  std::vector<EntryGrad> eg(target.entries.size());

  const std::size_t npix = static_cast<std::size_t>(h) * w;
  parallel_for(npix, 256, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> tvals;
    for (std::size_t pix = lo; pix < hi; ++pix) {
      const int32_t e0 = target.offsets[pix];
      const int32_t e1 = target.offsets[pix + 1];
      if (e0 == e1) continue;
      const double px = (static_cast<double>(pix % static_cast<std::size_t>(w))) + 0.5;
      const double py = (static_cast<double>(pix / static_cast<std::size_t>(w))) + 0.5;
      const Vec3 dC{d_color_image[3 * pix], d_color_image[3 * pix + 1],
                    d_color_image[3 * pix + 2]};

      tvals.resize(static_cast<std::size_t>(e1 - e0));
      double t = 1.0;
      for (int32_t k = e0; k < e1; ++k) {
        tvals[static_cast<std::size_t>(k - e0)] = t;
        const ContribEntry& e = target.entries[static_cast<std::size_t>(k)];
        t *= (1.0 - soa.opacity[static_cast<std::size_t>(e.prim)] * e.g);
      }

      Vec3 out_after = target.config.background;
      for (int32_t k = e1 - 1; k >= e0; --k) {
        const ContribEntry& e = target.entries[static_cast<std::size_t>(k)];
        const PrimProj& p = proj[static_cast<std::size_t>(e.prim)];
        const double alpha = soa.opacity[static_cast<std::size_t>(e.prim)];
        const Vec3 ci = soa.color_at(e.prim);
        const double ti = tvals[static_cast<std::size_t>(k - e0)];
        const double wgt = alpha * e.g * ti;

        const double d_a = dot(dC, ti * (ci - out_after));
        const double d_g = d_a * alpha;
        const double d_q = d_g * (-0.5 * e.g);

        EntryGrad& o = eg[static_cast<std::size_t>(k)];
        o.d_alpha = d_a * e.g;
        o.d_color[0] = dC.x * wgt;
        o.d_color[1] = dC.y * wgt;
        o.d_color[2] = dC.z * wgt;
        const double dx = px - p.mx;
        const double dy = py - p.my;
        // dq/dm2d = -2 * conic * d
        o.d_m2d[0] = d_q * (-2.0) * (p.ca * dx + p.cb * dy);
        o.d_m2d[1] = d_q * (-2.0) * (p.cb * dx + p.cc * dy);
        o.d_conic[0] = d_q * dx * dx;
        o.d_conic[1] = d_q * dx * dy;  // full-matrix off-diagonal (each of two)
        o.d_conic[2] = d_q * dy * dy;

        out_after = alpha * e.g * ci + (1.0 - alpha * e.g) * out_after;
      }
    }
  });

  // Fixed-order reduction into per-primitive accumulators.
  std::vector<double> dm2d(static_cast<std::size_t>(soa.n) * 2, 0.0);
  std::vector<double> dconic(static_cast<std::size_t>(soa.n) * 3, 0.0);
  for (std::size_t k = 0; k < target.entries.size(); ++k) {
    const std::size_t i = static_cast<std::size_t>(target.entries[k].prim);
    const EntryGrad& o = eg[k];
    grad.d_opacity[i] += o.d_alpha;
    grad.d_color[3 * i] += o.d_color[0];
    grad.d_color[3 * i + 1] += o.d_color[1];
    grad.d_color[3 * i + 2] += o.d_color[2];
    dm2d[2 * i] += o.d_m2d[0];
    dm2d[2 * i + 1] += o.d_m2d[1];
    dconic[3 * i] += o.d_conic[0];
    dconic[3 * i + 1] += o.d_conic[1];
    dconic[3 * i + 2] += o.d_conic[2];
  }

  // Convert (d_mean2d, d_conic) to d_mean through the projection.
  parallel_for(static_cast<std::size_t>(soa.n), 1024, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      if (proj[i].status != PrimStatus::kLive) continue;
      if (dm2d[2 * i] == 0 && dm2d[2 * i + 1] == 0 && dconic[3 * i] == 0 &&
          dconic[3 * i + 1] == 0 && dconic[3 * i + 2] == 0)
        continue;
      const CamFrame f = cam_frame(soa.mean_at(static_cast<int>(i)), soa.cov3d[i], cam);
      const Mat3& wr = cam.pose.rotation;
      const Mat3 v = wr * soa.cov3d[i] * transpose(wr);
      const double x = f.pc.x, y = f.pc.y, z = f.pc.z;
      const double j00 = cam.fx / z, j02 = -cam.fx * x / (z * z);
      const double j11 = cam.fy / z, j12 = -cam.fy * y / (z * z);

      // dL/dSigma' = -conic * G * conic (G = dL/dconic, full symmetric).
      const Sym2 C{proj[i].ca, proj[i].cb, proj[i].cc};
      const double g00 = dconic[3 * i], g01 = dconic[3 * i + 1], g11 = dconic[3 * i + 2];
      // G * conic
      const double gc00 = g00 * C.a + g01 * C.b;
      const double gc01 = g00 * C.b + g01 * C.c;
      const double gc10 = g01 * C.a + g11 * C.b;
      const double gc11 = g01 * C.b + g11 * C.c;
      const double s00 = -(C.a * gc00 + C.b * gc10);
      const double s01 = -(C.a * gc01 + C.b * gc11);
      const double s10 = -(C.b * gc00 + C.c * gc10);
      const double s11 = -(C.b * gc01 + C.c * gc11);

      // dL/dJ = (S + S^T) J V, J rows: (j00, 0, j02), (0, j11, j12).
      const double sp00 = s00 + s00, sp01 = s01 + s10, sp11 = s11 + s11;
      // rows of J V
      const double jv00 = j00 * v(0, 0) + j02 * v(2, 0);
      const double jv01 = j00 * v(0, 1) + j02 * v(2, 1);
      const double jv02 = j00 * v(0, 2) + j02 * v(2, 2);
      const double jv10 = j11 * v(1, 0) + j12 * v(2, 0);
      const double jv11 = j11 * v(1, 1) + j12 * v(2, 1);
      const double jv12 = j11 * v(1, 2) + j12 * v(2, 2);
      const double dj00 = sp00 * jv00 + sp01 * jv10;
      const double dj02 = sp00 * jv02 + sp01 * jv12;
      const double dj11 = sp01 * jv01 + sp11 * jv11;
      const double dj12 = sp01 * jv02 + sp11 * jv12;

      // dJ/d(cam-frame point); only j00, j02, j11, j12 vary.
      const double z2 = z * z;
      Vec3 d_pc{0, 0, 0};
      // mean2d path: J^T * dL/dm2d
      d_pc.x += j00 * dm2d[2 * i];
      d_pc.y += j11 * dm2d[2 * i + 1];
      d_pc.z += j02 * dm2d[2 * i] + j12 * dm2d[2 * i + 1];
      // covariance path
      d_pc.x += dj02 * (-cam.fx / z2);
      d_pc.y += dj12 * (-cam.fy / z2);
      d_pc.z += dj00 * (-cam.fx / z2) + dj02 * (2.0 * cam.fx * x / (z2 * z)) +
                dj11 * (-cam.fy / z2) + dj12 * (2.0 * cam.fy * y / (z2 * z));

      const Vec3 d_mean = transpose(wr) * d_pc;
      grad.d_mean[3 * i] = d_mean.x;
      grad.d_mean[3 * i + 1] = d_mean.y;
      grad.d_mean[3 * i + 2] = d_mean.z;
    }
  });

  return grad;
}

}  // namespace airsplat
