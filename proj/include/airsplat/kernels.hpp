// Data-parallel inner-loop kernels with runtime-dispatched SIMD variants.
//
// Every kernel is defined against the scalar reference semantics below, and
// the SIMD variants are bit-identical to it:
//   - elementwise kernels (exp_neg_half, adam_step, scaled_diff, conv_taps)
//     perform the same operations in the same order per element;
//   - reductions (sum_sq_diff) use a fixed 4-lane accumulation order that the
//     scalar reference emulates, so vectorization does not reassociate sums.
// exp_neg_half uses a shared Cody-Waite + polynomial evaluation rather than
// libm so scalar and vector lanes round identically.

#pragma once

#include <cstddef>
#include <string>

namespace airsplat::kernels {

struct KernelTable {
  const char* name;

  // w[i] = exp(-q[i] / 2). Intended domain q in [0, 60]; accurate to ~2 ulp.
  void (*exp_neg_half)(const double* q, double* w, std::size_t n);

  // sum over i of (a[i] - b[i])^2, fixed 4-accumulator order.
  double (*sum_sq_diff)(const double* a, const double* b, std::size_t n);

  // out[i] = sum_j in[i + j] * taps[j], j ascending; i in [0, n_out).
  void (*conv_taps)(const double* in, double* out, std::size_t n_out,
                    const double* taps, std::size_t n_taps);

  // Elementwise Adam update with precomputed bias corrections bc1 = 1 - b1^t,
  // bc2 = 1 - b2^t.
  void (*adam_step)(double* p, const double* g, double* m, double* v,
                    std::size_t n, double lr, double beta1, double beta2,
                    double eps, double bc1, double bc2);

  // out[i] = s * (a[i] - b[i])
  void (*scaled_diff)(const double* a, const double* b, double s, double* out,
                      std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the binary lacks the variant or the CPU does not support it.
const KernelTable* avx2_table();

// Table selected at startup (AVX2 when available) or via select_backend.
const KernelTable& active();

// "auto", "scalar" or "avx2". Returns false if the backend is unavailable.
bool select_backend(const std::string& name);

// Scalar reference exp(x) for x <= 0, shared with the vector lanes' algorithm.
double exp_neg_ref(double x);

}  // namespace airsplat::kernels
