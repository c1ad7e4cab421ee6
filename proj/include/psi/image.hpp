#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "psi/geometry.hpp"

namespace psi {

struct Rgb {
  uint8_t r{0}, g{0}, b{0};
  auto operator<=>(const Rgb&) const = default;
};

// Color-index image. Pixel values index a palette; kTracerIndex marks probe
// paint and is never a palette slot.
inline constexpr uint8_t kTracerIndex = 0xff;
inline constexpr Rgb kTracerColor{255, 0, 255};

struct Image {
  int width{0};
  int height{0};
  std::vector<uint8_t> px;

  Image() = default;
  Image(int w, int h, uint8_t fill = 0)
      : width(w), height(h), px(static_cast<size_t>(w) * h, fill) {}

  uint8_t& at(int x, int y) { return px[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int x, int y) const { return px[static_cast<size_t>(y) * width + x]; }
  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  bool operator==(const Image&) const = default;
};

struct RgbImage {
  int width{0};
  int height{0};
  std::vector<uint8_t> px;  // 3 bytes per pixel, row-major

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), px(static_cast<size_t>(w) * h * 3, 0) {}

  Rgb at(int x, int y) const {
    size_t i = (static_cast<size_t>(y) * width + x) * 3;
    return {px[i], px[i + 1], px[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    size_t i = (static_cast<size_t>(y) * width + x) * 3;
    px[i] = c.r;
    px[i + 1] = c.g;
    px[i + 2] = c.b;
  }
  bool operator==(const RgbImage&) const = default;
};

RgbImage to_rgb(const Image& img, const std::vector<Rgb>& palette);

// Patch pixels as floats in [0,255], layout (y, x, channel), length p*p*3.
std::vector<float> patch_vector(const RgbImage& img, int patch_row,
                                int patch_col, int patch_size);

void paste_patch(RgbImage& img, int patch_row, int patch_col, int patch_size,
                 const std::vector<float>& values);

}  // namespace psi
