#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "airsplat/kernels.hpp"

using namespace airsplat;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("reference exp matches libm on the render domain") {
  double worst = 0;
  for (int i = 0; i <= 60000; ++i) {
    const double q = i * 1e-3;  // q in [0, 60]
    const double ours = kernels::exp_neg_ref(-0.5 * q);
    const double libm = std::exp(-0.5 * q);
    worst = std::max(worst, std::abs(ours - libm) / libm);
  }
  CHECK(worst < 5e-15);
}

TEST_CASE("exp at zero is exactly one") {
  CHECK(kernels::exp_neg_ref(0.0) == 1.0);
  double q = 0.0, w = -1.0;
  kernels::scalar_table().exp_neg_half(&q, &w, 1);
  CHECK(w == 1.0);
}

TEST_CASE("scalar and AVX2 backends are bit-identical") {
  const kernels::KernelTable* simd = kernels::avx2_table();
  if (!simd) {
    MESSAGE("AVX2 unavailable on this host; equivalence pairing skipped");
    return;
  }
  const kernels::KernelTable& ref = kernels::scalar_table();
  std::mt19937_64 rng(7);

  for (std::size_t n : {std::size_t(1), std::size_t(3), std::size_t(4), std::size_t(7),
                        std::size_t(64), std::size_t(1001), std::size_t(4096)}) {
    const std::vector<double> q = random_vec(rng, n, 0.0, 9.0);
    std::vector<double> w_ref(n), w_simd(n);
    ref.exp_neg_half(q.data(), w_ref.data(), n);
    simd->exp_neg_half(q.data(), w_simd.data(), n);
    CHECK(w_ref == w_simd);

    const std::vector<double> a = random_vec(rng, n, -2.0, 2.0);
    const std::vector<double> b = random_vec(rng, n, -2.0, 2.0);
    CHECK(ref.sum_sq_diff(a.data(), b.data(), n) == simd->sum_sq_diff(a.data(), b.data(), n));

    std::vector<double> out_ref(n), out_simd(n);
    ref.scaled_diff(a.data(), b.data(), 0.37, out_ref.data(), n);
    simd->scaled_diff(a.data(), b.data(), 0.37, out_simd.data(), n);
    CHECK(out_ref == out_simd);

    if (n >= 11) {
      const std::vector<double> taps = random_vec(rng, 11, -1.0, 1.0);
      const std::size_t n_out = n - 10;
      std::vector<double> c_ref(n_out), c_simd(n_out);
      ref.conv_taps(a.data(), c_ref.data(), n_out, taps.data(), 11);
      simd->conv_taps(a.data(), c_simd.data(), n_out, taps.data(), 11);
      CHECK(c_ref == c_simd);
    }

    std::vector<double> p1 = a, m1(n, 0.0), v1(n, 0.0);
    std::vector<double> p2 = a, m2(n, 0.0), v2(n, 0.0);
    const std::vector<double> g = random_vec(rng, n, -1.0, 1.0);
    for (int t = 1; t <= 3; ++t) {
      const double bc1 = 1.0 - std::pow(0.9, t);
      const double bc2 = 1.0 - std::pow(0.999, t);
      ref.adam_step(p1.data(), g.data(), m1.data(), v1.data(), n, 1e-2, 0.9, 0.999, 1e-8,
                    bc1, bc2);
      simd->adam_step(p2.data(), g.data(), m2.data(), v2.data(), n, 1e-2, 0.9, 0.999, 1e-8,
                      bc1, bc2);
    }
    CHECK(p1 == p2);
    CHECK(m1 == m2);
    CHECK(v1 == v2);
  }
}

TEST_CASE("sum_sq_diff matches a long-double reference") {
  std::mt19937_64 rng(11);
  const std::size_t n = 5003;
  const std::vector<double> a = random_vec(rng, n, 0.0, 1.0);
  const std::vector<double> b = random_vec(rng, n, 0.0, 1.0);
  long double expect = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double d = static_cast<long double>(a[i]) - b[i];
    expect += d * d;
  }
  const double got = kernels::active().sum_sq_diff(a.data(), b.data(), n);
  CHECK(std::abs(got - static_cast<double>(expect)) / static_cast<double>(expect) < 1e-13);
}

TEST_CASE("conv_taps matches a naive loop") {
  std::mt19937_64 rng(13);
  const std::vector<double> in = random_vec(rng, 40, -1.0, 1.0);
  const std::vector<double> taps = random_vec(rng, 5, -1.0, 1.0);
  std::vector<double> out(36);
  kernels::active().conv_taps(in.data(), out.data(), out.size(), taps.data(), taps.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < taps.size(); ++j) acc += in[i + j] * taps[j];
    CHECK(out[i] == doctest::Approx(acc).epsilon(1e-14));
  }
}

TEST_CASE("adam_step matches the update formulas") {
  double p = 0.5, g = 0.3, m = 0.0, v = 0.0;
  const double lr = 1e-2, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  kernels::active().adam_step(&p, &g, &m, &v, 1, lr, b1, b2, eps, 1.0 - b1, 1.0 - b2);
  const double m_expect = (1 - b1) * 0.3;
  const double v_expect = (1 - b2) * 0.09;
  const double step = lr * (m_expect / (1 - b1)) / (std::sqrt(v_expect / (1 - b2)) + eps);
  CHECK(m == doctest::Approx(m_expect).epsilon(1e-15));
  CHECK(v == doctest::Approx(v_expect).epsilon(1e-15));
  CHECK(p == doctest::Approx(0.5 - step).epsilon(1e-15));
}

TEST_CASE("backend selection") {
  CHECK(kernels::select_backend("scalar"));
  CHECK(std::string(kernels::active().name) == "scalar");
  CHECK(kernels::select_backend("auto"));
  CHECK_FALSE(kernels::select_backend("avx512-bf16"));
}

}  // TEST_SUITE
