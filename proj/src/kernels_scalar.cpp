#include "airsplat/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>

#include "airsplat/kernels_expdet.hpp"

namespace airsplat::kernels {

double exp_neg_ref(double x) {
  using namespace expdet;
  const double kd = std::nearbyint(x * kInvLn2);
  const double r = (x - kd * kLn2Hi) - kd * kLn2Lo;
  double p = kC[12];
  for (int i = 11; i >= 0; --i) p = p * r + kC[i];
  const int64_t k = static_cast<int64_t>(kd);
  const uint64_t bits = static_cast<uint64_t>(k + 1023) << 52;
  double scale;
  std::memcpy(&scale, &bits, sizeof(scale));
  return p * scale;
}

namespace {

void exp_neg_half_scalar(const double* q, double* w, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) w[i] = exp_neg_ref(-0.5 * q[i]);
}

double sum_sq_diff_scalar(const double* a, const double* b, std::size_t n) {
  double acc[4] = {0, 0, 0, 0};
  const std::size_t n4 = n & ~std::size_t(3);
  for (std::size_t i = 0; i < n4; i += 4) {
    for (int l = 0; l < 4; ++l) {
      const double d = a[i + l] - b[i + l];
      acc[l] += d * d;
    }
  }
  for (std::size_t i = n4; i < n; ++i) {
    const double d = a[i] - b[i];
    acc[i - n4] += d * d;
  }
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

void conv_taps_scalar(const double* in, double* out, std::size_t n_out,
                      const double* taps, std::size_t n_taps) {
  for (std::size_t i = 0; i < n_out; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n_taps; ++j) acc += in[i + j] * taps[j];
    out[i] = acc;
  }
}

void adam_step_scalar(double* p, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double bc1, double bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void scaled_diff_scalar(const double* a, const double* b, double s, double* out,
                        std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = s * (a[i] - b[i]);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      "scalar",        exp_neg_half_scalar, sum_sq_diff_scalar,
      conv_taps_scalar, adam_step_scalar,    scaled_diff_scalar,
  };
  return table;
}

}  // namespace airsplat::kernels
