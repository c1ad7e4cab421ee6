#pragma once

#include <compare>
#include <cstdint>
#include <cstdlib>
#include <vector>

#include "psi/error.hpp"

namespace psi {

struct Vec2 {
  int x{0};
  int y{0};

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(Vec2 a, int s) { return {a.x * s, a.y * s}; }
  auto operator<=>(const Vec2&) const = default;

  int norm_l1() const { return std::abs(x) + std::abs(y); }
  int norm_linf() const { return std::max(std::abs(x), std::abs(y)); }
  long norm2_sq() const {
    return static_cast<long>(x) * x + static_cast<long>(y) * y;
  }
};

struct Vec2d {
  double x{0.0};
  double y{0.0};
};

// Dense row-major grid indexed (row, col).
template <typename T>
struct Grid {
  int rows{0};
  int cols{0};
  std::vector<T> data;

  Grid() = default;
  Grid(int r, int c, T fill = T{}) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  T& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  const T& at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  bool in_bounds(int r, int c) const {
    return r >= 0 && r < rows && c >= 0 && c < cols;
  }
  size_t size() const { return data.size(); }
  bool operator==(const Grid&) const = default;
};

}  // namespace psi
