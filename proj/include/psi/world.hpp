#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "psi/geometry.hpp"
#include "psi/image.hpp"
#include "psi/rng.hpp"

namespace psi {

// Sprite-world generative model. Velocity, camera-shift and slide priors are
// multisets: repeated entries raise that entry's probability. Sprite color
// and depth are assigned round-robin by sprite index (not sampled), which
// keeps the latent space small and sprites visually distinct.
struct WorldConfig {
  int grid_size{16};
  int patch_size{4};
  std::vector<Rgb> palette{{16, 16, 16},   {230, 25, 75},  {60, 180, 75},
                           {255, 225, 25}, {0, 130, 200},  {245, 130, 48},
                           {145, 30, 180}, {70, 240, 240}};
  int n_sprites{1};
  int sprite_min{2};
  int sprite_max{4};
  std::vector<Vec2> velocity_set{{0, 0}, {1, 0},  {-1, 0}, {0, 1}, {0, -1},
                                 {2, 0}, {-2, 0}, {0, 2},  {0, -2}};
  // Optional per-sprite override of velocity_set (index = sprite index).
  std::vector<std::vector<Vec2>> velocity_sets;
  std::vector<int> depth_layers{1, 2, 4};
  int background_depth{64};
  double motion_noise{0.0};
  int frames{2};
  uint64_t seed{0};

  // Camera: per-step shift prior and the parallax gain k in z = b*k/d.
  std::vector<Vec2> camera_shift_set{{0, 0}};
  int parallax_k{4};

  // Background texture: checkerboard of palette[0]/palette[1] fixed in world
  // coordinates; cell size in pixels.
  bool checker_background{false};
  int checker_cell{2};

  // Initial sprite positions snap to multiples of pos_step.
  int pos_step{1};

  // Fraction of episodes carrying a painted tracer dot at a uniform pixel.
  double tracer_prob{0.0};

  // Carried-sprite coupling: sprite 1 rides sprite 0 (realized displacement =
  // sprite 0's realized displacement + sprite 1's own slide from slide_set).
  bool coupled_carry{false};
  std::vector<Vec2> slide_set{{0, 0}};

  uint64_t enumeration_cap{10'000'000};

  int first_sprite_color() const { return checker_background ? 2 : 1; }
  int patches_per_side() const { return grid_size / patch_size; }
  const std::vector<Vec2>& velocities_of(int sprite) const {
    if (sprite < static_cast<int>(velocity_sets.size()) &&
        !velocity_sets[sprite].empty())
      return velocity_sets[sprite];
    return velocity_set;
  }
  int sprite_color(int index) const;
  int sprite_depth(int index) const;

  void validate() const;  // throws ConfigError

  bool operator==(const WorldConfig&) const = default;
};

void to_json(nlohmann::json& j, const WorldConfig& c);
void from_json(const nlohmann::json& j, WorldConfig& c);

struct Sprite {
  Vec2 pos;       // top-left, world coordinates
  Vec2 vel;       // own velocity (for the carried sprite: its slide)
  Vec2 size;      // width, height
  uint8_t color;  // palette index
  int depth;
  bool operator==(const Sprite&) const = default;
};

struct TracerState {
  bool present{false};
  int size{1};     // 1 -> 1x1 px, 2 -> 2x2 px
  int owner{-1};   // sprite index, -1 = background
  Vec2 anchor;     // background: world coords; sprite: offset from sprite pos
  bool operator==(const TracerState&) const = default;
};

struct WorldState {
  std::vector<Sprite> sprites;
  Vec2 camera;  // cumulative camera shift
  TracerState tracer;
  bool operator==(const WorldState&) const = default;
};

// Rounded parallax displacement of a surface at depth z under cumulative
// camera shift c: component-wise round(c * k / z), half away from zero.
Vec2 parallax_shift(Vec2 c, int z, int k);

Vec2 sprite_screen_pos(const Sprite& s, Vec2 camera, int k);

struct RenderResult {
  Image frame;          // palette indices; tracer pixels = kTracerIndex
  Grid<uint8_t> owner;  // 0 = background, i+1 = sprite i
  Grid<int16_t> depth;  // depth of the visible surface
};

RenderResult render(const WorldState& state, const WorldConfig& cfg);

// Advances sprites one step and accumulates camera shift `shift`. A sprite
// clamped at a wall reflects its own velocity on that axis. Returns realized
// per-sprite world displacement (after carry coupling and clamping).
std::vector<Vec2> step_world(WorldState& state, const WorldConfig& cfg,
                             Vec2 shift);

// With probability motion_noise each sprite redraws its velocity (carried
// sprite: its slide) from its prior.
void apply_motion_noise(WorldState& state, const WorldConfig& cfg, Rng& rng);

struct Episode {
  WorldConfig config;
  std::vector<WorldState> states;       // length frames, pre-step states
  std::vector<Image> frames;
  std::vector<Grid<uint8_t>> segments;  // per frame: 0 bg, i+1 sprite i
  std::vector<Grid<int16_t>> depth;     // per frame
  std::vector<Grid<Vec2>> flow;         // per step: displacement of the pixel
                                        // content at frame t, screen coords
  std::vector<Vec2> camera_shifts;      // per step
  bool sprite_fully_occluded{false};    // some sprite invisible in some frame
};

Episode gen_episode(const WorldConfig& cfg, uint64_t seed);

WorldState sample_initial_state(const WorldConfig& cfg, Rng& rng);

// Renders frames and ground truth for fixed latent choices. noise_vels[t] is
// empty (no redraw) or per-sprite velocities taking effect at step t.
Episode materialize_episode(const WorldConfig& cfg, WorldState initial,
                            const std::vector<Vec2>& shifts,
                            const std::vector<std::vector<Vec2>>& noise_vels);

// Majority pixel flow per patch; ties break toward smaller |v|^2, then
// lexicographic (x, then y).
Grid<Vec2> patch_flow(const Episode& ep, int step);

// Paints a tracer dot with anchor `pos`, attached to the surface visible
// there in the state's own rendering. Returns false if out of bounds.
bool attach_tracer(WorldState& state, const WorldConfig& cfg, Vec2 pos,
                   int size);

void export_episode(const Episode& ep, const std::filesystem::path& dir);
Episode import_episode(const std::filesystem::path& dir);

}  // namespace psi
