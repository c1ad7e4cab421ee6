#include "psi/image.hpp"

#include "psi/error.hpp"

namespace psi {

RgbImage to_rgb(const Image& img, const std::vector<Rgb>& palette) {
  RgbImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      uint8_t ix = img.at(x, y);
      if (ix == kTracerIndex) {
        out.set(x, y, kTracerColor);
      } else {
        if (ix >= palette.size())
          throw ShapeError("pixel index outside palette");
        out.set(x, y, palette[ix]);
      }
    }
  }
  return out;
}

std::vector<float> patch_vector(const RgbImage& img, int patch_row,
                                int patch_col, int patch_size) {
  if (!((patch_row + 1) * patch_size <= img.height &&
        (patch_col + 1) * patch_size <= img.width && patch_row >= 0 &&
        patch_col >= 0))
    throw ShapeError("patch outside image");
  std::vector<float> v;
  v.reserve(static_cast<size_t>(patch_size) * patch_size * 3);
  for (int dy = 0; dy < patch_size; ++dy) {
    for (int dx = 0; dx < patch_size; ++dx) {
      Rgb c = img.at(patch_col * patch_size + dx, patch_row * patch_size + dy);
      v.push_back(static_cast<float>(c.r));
      v.push_back(static_cast<float>(c.g));
      v.push_back(static_cast<float>(c.b));
    }
  }
  return v;
}

void paste_patch(RgbImage& img, int patch_row, int patch_col, int patch_size,
                 const std::vector<float>& values) {
  if (values.size() != static_cast<size_t>(patch_size) * patch_size * 3)
    throw ShapeError("patch vector size mismatch");
  size_t i = 0;
  auto clamp_u8 = [](float f) {
    if (f < 0.0f) f = 0.0f;
    if (f > 255.0f) f = 255.0f;
    return static_cast<uint8_t>(f + 0.5f);
  };
  for (int dy = 0; dy < patch_size; ++dy) {
    for (int dx = 0; dx < patch_size; ++dx) {
      Rgb c{clamp_u8(values[i]), clamp_u8(values[i + 1]),
            clamp_u8(values[i + 2])};
      i += 3;
      img.set(patch_col * patch_size + dx, patch_row * patch_size + dy, c);
    }
  }
}

}  // namespace psi
