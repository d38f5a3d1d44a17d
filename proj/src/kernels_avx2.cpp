// AVX2 variants. Compiled with -mavx2 (no FMA: contraction would break the
// bit-exact match with the scalar reference). Only reached after a runtime
// cpuid check in the dispatcher.

#include "airsplat/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstdint>

#include "airsplat/kernels_expdet.hpp"

namespace airsplat::kernels {
namespace {

using namespace expdet;

inline __m256d exp_pd(__m256d x) {
  const __m256d inv_ln2 = _mm256_set1_pd(kInvLn2);
  const __m256d ln2_hi = _mm256_set1_pd(kLn2Hi);
  const __m256d ln2_lo = _mm256_set1_pd(kLn2Lo);

  const __m256d kd = _mm256_round_pd(_mm256_mul_pd(x, inv_ln2),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_sub_pd(x, _mm256_mul_pd(kd, ln2_hi));
  r = _mm256_sub_pd(r, _mm256_mul_pd(kd, ln2_lo));

  __m256d p = _mm256_set1_pd(kC[12]);
  for (int i = 11; i >= 0; --i)
    p = _mm256_add_pd(_mm256_mul_pd(p, r), _mm256_set1_pd(kC[i]));

  // 2^k via exponent-field construction; k in [-1022, 0] for our inputs.
  const __m128i ki = _mm256_cvtpd_epi32(kd);
  const __m256i k64 = _mm256_cvtepi32_epi64(ki);
  const __m256i bits =
      _mm256_slli_epi64(_mm256_add_epi64(k64, _mm256_set1_epi64x(1023)), 52);
  const __m256d scale = _mm256_castsi256_pd(bits);
  return _mm256_mul_pd(p, scale);
}

void exp_neg_half_avx2(const double* q, double* w, std::size_t n) {
  const __m256d neg_half = _mm256_set1_pd(-0.5);
  const std::size_t n4 = n & ~std::size_t(3);
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d x = _mm256_mul_pd(_mm256_loadu_pd(q + i), neg_half);
    _mm256_storeu_pd(w + i, exp_pd(x));
  }
  for (std::size_t i = n4; i < n; ++i) w[i] = exp_neg_ref(-0.5 * q[i]);
}

double sum_sq_diff_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n4 = n & ~std::size_t(3);
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  for (std::size_t i = n4; i < n; ++i) {
    const double d = a[i] - b[i];
    lanes[i - n4] += d * d;
  }
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

void conv_taps_avx2(const double* in, double* out, std::size_t n_out,
                    const double* taps, std::size_t n_taps) {
  const std::size_t n4 = n_out & ~std::size_t(3);
  for (std::size_t i = 0; i < n4; i += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t j = 0; j < n_taps; ++j) {
      const __m256d t = _mm256_set1_pd(taps[j]);
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(in + i + j), t));
    }
    _mm256_storeu_pd(out + i, acc);
  }
  for (std::size_t i = n4; i < n_out; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n_taps; ++j) acc += in[i + j] * taps[j];
    out[i] = acc;
  }
}

void adam_step_avx2(double* p, const double* g, double* m, double* v,
                    std::size_t n, double lr, double beta1, double beta2,
                    double eps, double bc1, double bc2) {
  const __m256d b1 = _mm256_set1_pd(beta1);
  const __m256d b2 = _mm256_set1_pd(beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vbc1 = _mm256_set1_pd(bc1);
  const __m256d vbc2 = _mm256_set1_pd(bc2);
  const std::size_t n4 = n & ~std::size_t(3);
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    __m256d mi = _mm256_loadu_pd(m + i);
    __m256d vi = _mm256_loadu_pd(v + i);
    mi = _mm256_add_pd(_mm256_mul_pd(b1, mi), _mm256_mul_pd(omb1, gi));
    vi = _mm256_add_pd(_mm256_mul_pd(b2, vi),
                       _mm256_mul_pd(omb2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d mhat = _mm256_div_pd(mi, vbc1);
    const __m256d vhat = _mm256_div_pd(vi, vbc2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
  }
  for (std::size_t i = n4; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void scaled_diff_avx2(const double* a, const double* b, double s, double* out,
                      std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  const std::size_t n4 = n & ~std::size_t(3);
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    _mm256_storeu_pd(out + i, _mm256_mul_pd(vs, d));
  }
  for (std::size_t i = n4; i < n; ++i) out[i] = s * (a[i] - b[i]);
}

}  // namespace

const KernelTable* avx2_table_impl() {
  static const KernelTable table{
      "avx2",         exp_neg_half_avx2, sum_sq_diff_avx2,
      conv_taps_avx2, adam_step_avx2,    scaled_diff_avx2,
  };
  return &table;
}

}  // namespace airsplat::kernels

#else

namespace airsplat::kernels {
const KernelTable* avx2_table_impl() { return nullptr; }
}  // namespace airsplat::kernels

#endif
