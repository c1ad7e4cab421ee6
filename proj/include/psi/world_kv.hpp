#pragma once

#include <string>
#include <vector>

#include "psi/io.hpp"
#include "psi/world.hpp"

namespace psi {

// Flat key=value rendering of a world config. Per-sprite velocity overrides
// use numbered keys (velocity_set_0, velocity_set_1, ...).
KvConfig world_to_kv(const WorldConfig& cfg, const std::string& prefix = "");

// Reads keys `prefix + name`; absent keys keep their defaults. Does not
// reject foreign keys — callers validate the full file against their schema.
WorldConfig world_from_kv(const KvConfig& kv, const std::string& prefix = "");

// Every key world_from_kv understands, for schema validation.
std::vector<std::string> world_kv_keys(const std::string& prefix = "");

}  // namespace psi
