#pragma once

namespace psi {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace psi
