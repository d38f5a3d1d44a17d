// Interleaved-RGB double images in [0,1] plus binary PPM I/O.

#pragma once

#include <string>
#include <vector>

#include "airsplat/common.hpp"

namespace airsplat {

struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // height * width * 3, row-major, RGB interleaved

  Image() = default;
  Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0.0) {}

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  double* px(int r, int c) { return data.data() + 3 * (static_cast<std::size_t>(r) * width + c); }
  const double* px(int r, int c) const {
    return data.data() + 3 * (static_cast<std::size_t>(r) * width + c);
  }
  bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

// Binary P6, maxval 255, channel values rounded half-up.
void write_ppm(const Image& img, const std::string& path);
Image read_ppm(const std::string& path);

// Grayscale P5 variant used for rating heat-maps; values in [0,1].
void write_pgm(const std::vector<double>& gray, int height, int width,
               const std::string& path);

}  // namespace airsplat
