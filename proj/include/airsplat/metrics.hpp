// PSNR and SSIM. SSIM follows the standard 11x11 Gaussian-window (sigma 1.5)
// formulation with C1 = 0.01^2, C2 = 0.03^2 at unit dynamic range, computed
// per channel over valid window positions and averaged. An analytic gradient
// with respect to the first image backs the perceptual term of the
// reconstruction loss.

#pragma once

#include <vector>

#include "airsplat/image.hpp"

namespace airsplat {

struct MetricReport {
  double psnr = 0;  // dB, capped at the 99.0 sentinel
  double ssim = 0;
};

double mse(const Image& a, const Image& b);

// 10*log10(1/MSE) capped at 99.0 (sentinel for MSE < 1e-10).
double psnr(const Image& a, const Image& b);

// Requires both dimensions >= 11 (TooSmallError otherwise).
double ssim(const Image& a, const Image& b);

// Also fills d_a = d(ssim)/d(a), same layout as a.data.
double ssim_with_grad(const Image& a, const Image& b, std::vector<double>& d_a);

inline MetricReport metric_report(const Image& a, const Image& b) {
  return {psnr(a, b), ssim(a, b)};
}

}  // namespace airsplat
