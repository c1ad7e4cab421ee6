#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "psi/error.hpp"

namespace psi {

using Code = uint16_t;

enum class Modality : uint8_t { rgb = 0, camera = 1, flow = 2 };

std::string to_string(Modality m);

// Addresses one value slot in an episode. For rgb, `frame` is the frame index
// and `level` the quantizer level of patch (row, col). For camera and flow the
// address refers to the transition frame -> frame+1; camera uses `row` as the
// axis (0 = x shift, 1 = y shift).
struct Pointer {
  Modality modality{Modality::rgb};
  uint8_t frame{0};
  uint8_t row{0};
  uint8_t col{0};
  uint8_t level{0};

  static Pointer rgb(int frame, int row, int col, int level) {
    return {Modality::rgb, static_cast<uint8_t>(frame), static_cast<uint8_t>(row),
            static_cast<uint8_t>(col), static_cast<uint8_t>(level)};
  }
  static Pointer camera(int step, int axis) {
    return {Modality::camera, static_cast<uint8_t>(step),
            static_cast<uint8_t>(axis), 0, 0};
  }
  static Pointer flow(int step, int row, int col) {
    return {Modality::flow, static_cast<uint8_t>(step), static_cast<uint8_t>(row),
            static_cast<uint8_t>(col), 0};
  }

  auto operator<=>(const Pointer&) const = default;

  std::string to_string() const;
};

// Sparse pointer -> value map; the conditioning set of a prediction call.
class Datum {
public:
  void insert(const Pointer& p, Code v) {
    auto [it, fresh] = entries_.emplace(p, v);
    if (!fresh && it->second != v)
      throw OrderingError("conflicting value for pointer " + p.to_string());
  }
  void insert_or_assign(const Pointer& p, Code v) { entries_[p] = v; }
  bool contains(const Pointer& p) const { return entries_.count(p) != 0; }
  Code at(const Pointer& p) const {
    auto it = entries_.find(p);
    if (it == entries_.end())
      throw OrderingError("datum missing pointer " + p.to_string());
    return it->second;
  }
  void erase(const Pointer& p) { entries_.erase(p); }

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  bool operator==(const Datum&) const = default;

  Datum merged(const Datum& other) const {
    Datum out = *this;
    for (const auto& [p, v] : other) out.insert(p, v);
    return out;
  }

private:
  std::map<Pointer, Code> entries_;
};

}  // namespace psi
