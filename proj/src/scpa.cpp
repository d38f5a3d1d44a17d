#include "airsplat/scpa.hpp"

#include <cmath>

#include "airsplat/kernels.hpp"
#include "airsplat/metrics.hpp"

namespace airsplat {

namespace {

uint64_t fnv_mix(uint64_t h, uint64_t x) { return (h ^ x) * 0x100000001b3ull; }

void accumulate(RenderGrad& acc, const RenderGrad& g) {
  if (acc.d_opacity.empty()) {
    acc = g;
    return;
  }
  for (std::size_t i = 0; i < g.d_opacity.size(); ++i) acc.d_opacity[i] += g.d_opacity[i];
  for (std::size_t i = 0; i < g.d_color.size(); ++i) acc.d_color[i] += g.d_color[i];
  for (std::size_t i = 0; i < g.d_mean.size(); ++i) acc.d_mean[i] += g.d_mean[i];
}

}  // namespace

RecLossResult rec_loss(const Image& rendered, const Image& gt, double lambda_s,
                       bool with_grad) {
  if (!rendered.same_shape(gt)) throw ShapeMismatchError("rec_loss: image shapes differ");
  RecLossResult out;
  const std::size_t count = rendered.data.size();
  out.mse_term =
      kernels::active().sum_sq_diff(rendered.data.data(), gt.data.data(), count) /
      static_cast<double>(count);
  if (with_grad) {
    out.d_image.resize(count);
    kernels::active().scaled_diff(rendered.data.data(), gt.data.data(),
                                  2.0 / static_cast<double>(count),
                                  out.d_image.data(), count);
  }
  if (lambda_s != 0.0) {
    if (with_grad) {
      std::vector<double> d_ssim;
      const double s = ssim_with_grad(rendered, gt, d_ssim);
      out.perc_term = lambda_s * (1.0 - s);
      for (std::size_t i = 0; i < count; ++i) out.d_image[i] -= lambda_s * d_ssim[i];
    } else {
      out.perc_term = lambda_s * (1.0 - ssim(rendered, gt));
    }
  }
  out.total = out.mse_term + out.perc_term;
  return out;
}

Twist drift_twist(const RigidPose& p1, const RigidPose& p2) {
  return log_map(compose(p2, inverse(p1)));
}

RigidPose align_pose(const RigidPose& p1, const Twist& xi) {
  return compose(exp_map(-xi), p1);
}

namespace detail {

ScpaResult scpa_core(const Scene& scene, const PrimitiveSoA& soa,
                     const std::vector<RigidPose>& pass1,
                     const std::vector<RigidPose>& pass2,
                     const ReconConfig& recon, RenderGrad* grad) {
  const std::size_t n_targets = scene.target_cameras.size();
  if (pass1.size() != n_targets || pass2.size() != n_targets)
    throw ShapeMismatchError("scpa_core: pose pass sizes do not match targets");
  if (n_targets == 0) throw ConfigError("scpa_core: scene has no targets");

  ScpaResult out;
  out.targets.resize(n_targets);
  uint64_t digest = 0x811c9dc5u;

  for (std::size_t t = 0; t < n_targets; ++t) {
    ScpaTarget& st = out.targets[t];
    Camera cam = scene.target_cameras[t];
    const Image& gt = scene.target_images[t];

    cam.pose = pass1[t];
    const RenderTarget initial = render(soa, cam, recon.render);
    const RecLossResult rec_initial = rec_loss(initial.color, gt, recon.lambda_s, true);
    st.loss_initial = rec_initial.total;

    bool have_aligned = false;
    RenderTarget aligned_render;
    RecLossResult rec_aligned;
    try {
      st.xi = drift_twist(pass1[t], pass2[t]);
      st.aligned_pose = align_pose(pass1[t], st.xi);
      cam.pose = st.aligned_pose;
      aligned_render = render(soa, cam, recon.render);
      rec_aligned = rec_loss(aligned_render.color, gt, recon.lambda_s, true);
      st.loss_aligned = rec_aligned.total;
      have_aligned = true;
    } catch (const RotationNearPiError&) {
      st.near_pi_fallback = true;
      st.xi = Twist{};
      st.aligned_pose = pass1[t];
      st.loss_aligned = st.loss_initial;
    }

    const bool pick_aligned = have_aligned && st.loss_aligned < st.loss_initial;
    st.chosen = pick_aligned ? ScpaBranch::kAligned : ScpaBranch::kInitial;
    const RecLossResult& chosen_rec = pick_aligned ? rec_aligned : rec_initial;
    const RenderTarget& chosen_render = pick_aligned ? aligned_render : initial;

    out.loss_total += std::min(st.loss_aligned, st.loss_initial);
    out.mse_sum += chosen_rec.mse_term;
    out.perc_sum += chosen_rec.perc_term;
    if (pick_aligned)
      ++out.aligned_count;
    else
      ++out.initial_count;

    if (grad) accumulate(*grad, render_backward(chosen_render, soa, chosen_rec.d_image));

    digest = fnv_mix(digest, t * 4 + (pick_aligned ? 1 : 0) + (st.near_pi_fallback ? 2 : 0));
    digest = fnv_mix(digest, chosen_render.structure_digest());
  }
  out.digest = digest;
  return out;
}

}  // namespace detail

ScpaResult scpa_loss(const Scene& scene, const PrimitiveSoA& soa,
                     const DriftModel& drift, const ReconConfig& recon,
                     RenderGrad* grad) {
  std::vector<RigidPose> gt_poses;
  gt_poses.reserve(scene.target_cameras.size());
  for (const Camera& c : scene.target_cameras) gt_poses.push_back(c.pose);
  const std::vector<RigidPose> pass1 = predict_poses(drift, gt_poses, 1);
  const std::vector<RigidPose> pass2 = predict_poses(drift, pass1, 2);
  return detail::scpa_core(scene, soa, pass1, pass2, recon, grad);
}

}  // namespace airsplat
