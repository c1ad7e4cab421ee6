#include "psi/pointer.hpp"

namespace psi {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::rgb: return "rgb";
    case Modality::camera: return "camera";
    case Modality::flow: return "flow";
  }
  return "?";
}

std::string Pointer::to_string() const {
  std::string s = psi::to_string(modality);
  s += "[f" + std::to_string(frame);
  if (modality == Modality::camera) {
    s += ", axis " + std::to_string(row);
  } else {
    s += ", r" + std::to_string(row) + " c" + std::to_string(col);
    if (modality == Modality::rgb) s += " l" + std::to_string(level);
  }
  s += "]";
  return s;
}

}  // namespace psi
