#include "airsplat/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "airsplat/kernels.hpp"

namespace airsplat {

namespace {

constexpr int kWin = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const double* gauss_taps() {
  static const std::array<double, kWin> taps = [] {
    std::array<double, kWin> t{};
    const double sigma = 1.5;
    double sum = 0;
    for (int i = 0; i < kWin; ++i) {
      const double d = i - (kWin - 1) / 2.0;
      t[static_cast<std::size_t>(i)] = std::exp(-0.5 * d * d / (sigma * sigma));
      sum += t[static_cast<std::size_t>(i)];
    }
    for (double& v : t) v /= sum;
    return t;
  }();
  return taps.data();
}

void require_same_shape(const Image& a, const Image& b, const char* who) {
  if (!a.same_shape(b)) throw ShapeMismatchError(std::string(who) + ": image shapes differ");
}

// Valid-mode separable filter: in is H x W, out is (H-10) x (W-10).
void filter_valid(const std::vector<double>& in, int h, int w,
                  std::vector<double>& tmp, std::vector<double>& out) {
  const auto& K = kernels::active();
  const int wc = w - kWin + 1;
  const int hc = h - kWin + 1;
  tmp.resize(static_cast<std::size_t>(h) * wc);
  out.resize(static_cast<std::size_t>(hc) * wc);
  for (int r = 0; r < h; ++r)
    K.conv_taps(in.data() + static_cast<std::size_t>(r) * w,
                tmp.data() + static_cast<std::size_t>(r) * wc,
                static_cast<std::size_t>(wc), gauss_taps(), kWin);
  const double* g = gauss_taps();
  for (int r = 0; r < hc; ++r)
    for (int c = 0; c < wc; ++c) {
      double acc = 0;
      for (int u = 0; u < kWin; ++u)
        acc += tmp[static_cast<std::size_t>(r + u) * wc + c] * g[u];
      out[static_cast<std::size_t>(r) * wc + c] = acc;
    }
}

// Adjoint of filter_valid: map is (H-10) x (W-10), result accumulates into a
// full H x W buffer. The Gaussian window is symmetric, so the adjoint is a
// zero-padded full convolution.
void filter_adjoint(const std::vector<double>& map, int h, int w,
                    std::vector<double>& tmp, std::vector<double>& out) {
  const auto& K = kernels::active();
  const double* g = gauss_taps();
  const int wc = w - kWin + 1;
  const int hc = h - kWin + 1;
  // Column direction first: full convolution along rows-index.
  tmp.assign(static_cast<std::size_t>(h) * wc, 0.0);
  for (int r = 0; r < hc; ++r)
    for (int u = 0; u < kWin; ++u) {
      double* dst = tmp.data() + static_cast<std::size_t>(r + u) * wc;
      const double* src = map.data() + static_cast<std::size_t>(r) * wc;
      const double gu = g[u];
      for (int c = 0; c < wc; ++c) dst[c] += src[c] * gu;
    }
  // Row direction via a zero-padded valid correlation.
  out.assign(static_cast<std::size_t>(h) * w, 0.0);
  std::vector<double> padded(static_cast<std::size_t>(wc) + 2 * (kWin - 1), 0.0);
  for (int r = 0; r < h; ++r) {
    std::fill(padded.begin(), padded.end(), 0.0);
    std::copy(tmp.begin() + static_cast<std::size_t>(r) * wc,
              tmp.begin() + static_cast<std::size_t>(r + 1) * wc,
              padded.begin() + (kWin - 1));
    K.conv_taps(padded.data(), out.data() + static_cast<std::size_t>(r) * w,
                static_cast<std::size_t>(w), g, kWin);
  }
}

void extract_channel(const Image& img, int ch, std::vector<double>& out) {
  out.resize(img.pixels());
  for (std::size_t i = 0; i < img.pixels(); ++i) out[i] = img.data[3 * i + ch];
}

struct SsimScratch {
  std::vector<double> x, y, xx, yy, xy;
  std::vector<double> m1, m2, s1, s2, s12;
  std::vector<double> dm1, ds1, ds12;
  std::vector<double> tmp, adj;
};

double ssim_impl(const Image& a, const Image& b, std::vector<double>* d_a) {
  require_same_shape(a, b, "ssim");
  const int h = a.height, w = a.width;
  if (h < kWin || w < kWin) throw TooSmallError("ssim: images must be at least 11x11");

  const int hc = h - kWin + 1, wc = w - kWin + 1;
  const std::size_t nvalid = static_cast<std::size_t>(hc) * wc;
  if (d_a) d_a->assign(a.data.size(), 0.0);

  SsimScratch s;
  double total = 0;
  for (int ch = 0; ch < 3; ++ch) {
    extract_channel(a, ch, s.x);
    extract_channel(b, ch, s.y);
    s.xx.resize(s.x.size());
    s.yy.resize(s.x.size());
    s.xy.resize(s.x.size());
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      s.xx[i] = s.x[i] * s.x[i];
      s.yy[i] = s.y[i] * s.y[i];
      s.xy[i] = s.x[i] * s.y[i];
    }
    filter_valid(s.x, h, w, s.tmp, s.m1);
    filter_valid(s.y, h, w, s.tmp, s.m2);
    filter_valid(s.xx, h, w, s.tmp, s.s1);
    filter_valid(s.yy, h, w, s.tmp, s.s2);
    filter_valid(s.xy, h, w, s.tmp, s.s12);

    if (d_a) {
      s.dm1.assign(nvalid, 0.0);
      s.ds1.assign(nvalid, 0.0);
      s.ds12.assign(nvalid, 0.0);
    }

    for (std::size_t i = 0; i < nvalid; ++i) {
      const double m1 = s.m1[i], m2 = s.m2[i];
      const double sx = s.s1[i] - m1 * m1;
      const double sy = s.s2[i] - m2 * m2;
      const double sxy = s.s12[i] - m1 * m2;
      const double a1 = 2 * m1 * m2 + kC1;
      const double a2 = 2 * sxy + kC2;
      const double b1 = m1 * m1 + m2 * m2 + kC1;
      const double b2 = sx + sy + kC2;
      total += (a1 * a2) / (b1 * b2);
      if (d_a) {
        const double inv = 1.0 / (b1 * b2);
        s.ds1[i] = -a1 * a2 * inv / b2;
        s.ds12[i] = 2 * a1 * inv;
        s.dm1[i] = 2 * m2 * a2 * inv - 2 * m1 * a1 * a2 * inv / b1 -
                   2 * m1 * s.ds1[i] - m2 * s.ds12[i];
      }
    }

    if (d_a) {
      const double scale = 1.0 / (3.0 * static_cast<double>(nvalid));
      filter_adjoint(s.dm1, h, w, s.tmp, s.adj);
      for (std::size_t i = 0; i < s.adj.size(); ++i)
        (*d_a)[3 * i + ch] += scale * s.adj[i];
      filter_adjoint(s.ds1, h, w, s.tmp, s.adj);
      for (std::size_t i = 0; i < s.adj.size(); ++i)
        (*d_a)[3 * i + ch] += scale * 2.0 * s.x[i] * s.adj[i];
      filter_adjoint(s.ds12, h, w, s.tmp, s.adj);
      for (std::size_t i = 0; i < s.adj.size(); ++i)
        (*d_a)[3 * i + ch] += scale * s.y[i] * s.adj[i];
    }
  }
  return total / (3.0 * static_cast<double>(nvalid));
}

}  // namespace

double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  const double ss =
      kernels::active().sum_sq_diff(a.data.data(), b.data.data(), a.data.size());
  return ss / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m < 1e-10) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / m));
}

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, nullptr); }

double ssim_with_grad(const Image& a, const Image& b, std::vector<double>& d_a) {
  return ssim_impl(a, b, &d_a);
}

}  // namespace airsplat
