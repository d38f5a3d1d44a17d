#include "airsplat/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace airsplat {

namespace {

unsigned char quantize(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  const double scaled = std::floor(clamped * 255.0 + 0.5);  // round half-up
  return static_cast<unsigned char>(std::min(255.0, scaled));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_ppm(const Image& img, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw Error("cannot open for writing: " + path);
  std::fprintf(f.get(), "P6\n%d %d\n255\n", img.width, img.height);
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  for (int r = 0; r < img.height; ++r) {
    const double* src = img.px(r, 0);
    for (int i = 0; i < img.width * 3; ++i) row[static_cast<std::size_t>(i)] = quantize(src[i]);
    if (std::fwrite(row.data(), 1, row.size(), f.get()) != row.size())
      throw Error("short write: " + path);
  }
}

Image read_ppm(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw Error("cannot open: " + path);
  char magic[3] = {};
  int w = 0, h = 0, maxval = 0;
  if (std::fscanf(f.get(), "%2s %d %d %d", magic, &w, &h, &maxval) != 4 ||
      std::string(magic) != "P6" || maxval != 255 || w <= 0 || h <= 0)
    throw Error("not a supported P6 PPM: " + path);
  std::fgetc(f.get());  // single whitespace after header
  Image img(h, w);
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  if (std::fread(raw.data(), 1, raw.size(), f.get()) != raw.size())
    throw Error("truncated PPM: " + path);
  for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
  return img;
}

void write_pgm(const std::vector<double>& gray, int height, int width,
               const std::string& path) {
  if (gray.size() != static_cast<std::size_t>(height) * width)
    throw ShapeMismatchError("write_pgm: size mismatch");
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw Error("cannot open for writing: " + path);
  std::fprintf(f.get(), "P5\n%d %d\n255\n", width, height);
  std::vector<unsigned char> buf(gray.size());
  for (std::size_t i = 0; i < gray.size(); ++i) buf[i] = quantize(gray[i]);
  if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size())
    throw Error("short write: " + path);
}

}  // namespace airsplat
