#pragma once

#include <nlohmann/json.hpp>

#include "psi/geometry.hpp"
#include "psi/image.hpp"
#include "psi/world.hpp"

namespace psi {

inline void to_json(nlohmann::json& j, const Vec2& v) { j = {v.x, v.y}; }
inline void from_json(const nlohmann::json& j, Vec2& v) {
  v.x = j.at(0).get<int>();
  v.y = j.at(1).get<int>();
}

inline void to_json(nlohmann::json& j, const Rgb& c) { j = {c.r, c.g, c.b}; }
inline void from_json(const nlohmann::json& j, Rgb& c) {
  c.r = j.at(0).get<uint8_t>();
  c.g = j.at(1).get<uint8_t>();
  c.b = j.at(2).get<uint8_t>();
}

inline void to_json(nlohmann::json& j, const Sprite& s) {
  j = {{"pos", s.pos},     {"vel", s.vel},     {"size", s.size},
       {"color", s.color}, {"depth", s.depth}};
}
inline void from_json(const nlohmann::json& j, Sprite& s) {
  j.at("pos").get_to(s.pos);
  j.at("vel").get_to(s.vel);
  j.at("size").get_to(s.size);
  s.color = j.at("color").get<uint8_t>();
  s.depth = j.at("depth").get<int>();
}

inline void to_json(nlohmann::json& j, const TracerState& t) {
  j = {{"present", t.present},
       {"size", t.size},
       {"owner", t.owner},
       {"anchor", t.anchor}};
}
inline void from_json(const nlohmann::json& j, TracerState& t) {
  t.present = j.at("present").get<bool>();
  t.size = j.at("size").get<int>();
  t.owner = j.at("owner").get<int>();
  j.at("anchor").get_to(t.anchor);
}

inline void to_json(nlohmann::json& j, const WorldState& s) {
  j = {{"sprites", s.sprites}, {"camera", s.camera}, {"tracer", s.tracer}};
}
inline void from_json(const nlohmann::json& j, WorldState& s) {
  j.at("sprites").get_to(s.sprites);
  j.at("camera").get_to(s.camera);
  j.at("tracer").get_to(s.tracer);
}

}  // namespace psi
