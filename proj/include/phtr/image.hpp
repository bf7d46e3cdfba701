#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phtr/errors.hpp"

namespace phtr {

// Grayscale image, row-major float64 in [0, 1] (0 = ink, 1 = background).
struct Image {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int64_t h, int64_t w, double fill = 0.0)
      : height(h), width(w),
        pixels(static_cast<size_t>(h * w), fill) {}

  double& at(int64_t y, int64_t x) {
    return pixels[static_cast<size_t>(y * width + x)];
  }
  double at(int64_t y, int64_t x) const {
    return pixels[static_cast<size_t>(y * width + x)];
  }
  int64_t numel() const { return height * width; }
};

// Boolean ink mask with the same layout as Image.
struct Mask {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> bits;

  Mask() = default;
  Mask(int64_t h, int64_t w, bool fill = false)
      : height(h), width(w),
        bits(static_cast<size_t>(h * w), fill ? 1 : 0) {}

  uint8_t& at(int64_t y, int64_t x) {
    return bits[static_cast<size_t>(y * width + x)];
  }
  uint8_t at(int64_t y, int64_t x) const {
    return bits[static_cast<size_t>(y * width + x)];
  }
  int64_t count() const {
    int64_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }
};

// Bilinear sample at continuous (x, y) with edge clamping; integer pixel
// centers (half-pixel convention is applied by the resize callers).
double bilinear_sample(const Image& img, double x, double y);

// Bilinear resize to an explicit size using the half-pixel center mapping,
// so an identity-sized resize copies values exactly.
Image resize_bilinear(const Image& img, int64_t out_h, int64_t out_w);

// Halves both dimensions (ceil for odd sizes) with bilinear interpolation.
// Requires height and width >= 2.
Image downsample_halve(const Image& img);

// Pads to a square with the background value (bottom/right), then resizes to
// target x target. Requires target >= 8.
Image resize_square(const Image& img, int64_t target, double background = 1.0);

// Same geometry as resize_square for a mask: pad false, float-resize the
// 0/1 field, threshold at 0.5.
Mask resize_square_mask(const Mask& mask, int64_t target);

// Binary PGM (P5, maxval 255). Values clamp to [0, 1] on write.
void write_pgm(const std::string& path, const Image& img);
Image read_pgm(const std::string& path);

// Masks stored as PGM with 0 (false) / 255 (true).
void write_mask_pgm(const std::string& path, const Mask& mask);
Mask read_mask_pgm(const std::string& path);

}  // namespace phtr
