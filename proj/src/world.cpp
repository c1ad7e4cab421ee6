#include "psi/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "psi/io.hpp"
#include "psi/serial_json.hpp"
#include "psi/world_kv.hpp"

namespace psi {

namespace {

int round_away(double v) {
  return static_cast<int>(v >= 0 ? std::floor(v + 0.5) : std::ceil(v - 0.5));
}

int floordiv(int a, int b) {
  int q = a / b, r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

bool boxes_overlap(Vec2 a_pos, Vec2 a_size, Vec2 b_pos, Vec2 b_size) {
  return a_pos.x < b_pos.x + b_size.x && b_pos.x < a_pos.x + a_size.x &&
         a_pos.y < b_pos.y + b_size.y && b_pos.y < a_pos.y + a_size.y;
}

}  // namespace

int WorldConfig::sprite_color(int index) const {
  int first = first_sprite_color();
  int span = static_cast<int>(palette.size()) - first;
  if (span <= 0) throw ConfigError("palette too small for sprites");
  return first + index % span;
}

int WorldConfig::sprite_depth(int index) const {
  return depth_layers[index % depth_layers.size()];
}

void WorldConfig::validate() const {
  if (grid_size < 2 || grid_size > 256)
    throw ConfigError("grid_size out of range");
  if (patch_size < 1 || (patch_size != 1 && patch_size % 2 != 0))
    throw ConfigError("patch_size must be 1 or even");
  if (grid_size % patch_size != 0)
    throw ConfigError("grid_size must be divisible by patch_size");
  if (palette.size() < 2 || palette.size() > 254)
    throw ConfigError("palette must have 2..254 entries");
  if (n_sprites < 0) throw ConfigError("n_sprites must be >= 0");
  if (sprite_min < 1 || sprite_max < sprite_min)
    throw ConfigError("sprite size range invalid");
  if (sprite_max > grid_size) throw ConfigError("sprite larger than grid");
  if (velocity_set.empty()) throw ConfigError("velocity_set empty");
  for (const auto& vs : velocity_sets)
    if (!vs.empty() && vs.size() > 64)
      throw ConfigError("velocity override too large");
  if (depth_layers.empty()) throw ConfigError("depth_layers empty");
  for (int d : depth_layers)
    if (d < 1 || d > background_depth)
      throw ConfigError("depth layer outside [1, background_depth]");
  if (background_depth < 1) throw ConfigError("background_depth must be >= 1");
  if (motion_noise < 0.0 || motion_noise > 1.0)
    throw ConfigError("motion_noise outside [0, 1]");
  if (frames < 2 || frames > 4) throw ConfigError("frames must be 2..4");
  if (camera_shift_set.empty()) throw ConfigError("camera_shift_set empty");
  for (Vec2 s : camera_shift_set)
    if (s.norm_linf() > 4)
      throw ConfigError("camera shift beyond the +-4 code range");
  if (parallax_k < 1) throw ConfigError("parallax_k must be >= 1");
  if (checker_cell < 1) throw ConfigError("checker_cell must be >= 1");
  if (checker_background && palette.size() < 3)
    throw ConfigError("checker background needs >= 3 palette entries");
  if (pos_step < 1) throw ConfigError("pos_step must be >= 1");
  if (tracer_prob < 0.0 || tracer_prob > 1.0)
    throw ConfigError("tracer_prob outside [0, 1]");
  if (coupled_carry && n_sprites < 2)
    throw ConfigError("coupled_carry needs at least 2 sprites");
  if (slide_set.empty()) throw ConfigError("slide_set empty");
  if (enumeration_cap < 1) throw ConfigError("enumeration_cap must be >= 1");
}

void to_json(nlohmann::json& j, const WorldConfig& c) {
  j = nlohmann::json{{"grid_size", c.grid_size},
                     {"patch_size", c.patch_size},
                     {"palette", c.palette},
                     {"n_sprites", c.n_sprites},
                     {"sprite_min", c.sprite_min},
                     {"sprite_max", c.sprite_max},
                     {"velocity_set", c.velocity_set},
                     {"velocity_sets", c.velocity_sets},
                     {"depth_layers", c.depth_layers},
                     {"background_depth", c.background_depth},
                     {"motion_noise", c.motion_noise},
                     {"frames", c.frames},
                     {"seed", c.seed},
                     {"camera_shift_set", c.camera_shift_set},
                     {"parallax_k", c.parallax_k},
                     {"checker_background", c.checker_background},
                     {"checker_cell", c.checker_cell},
                     {"pos_step", c.pos_step},
                     {"tracer_prob", c.tracer_prob},
                     {"coupled_carry", c.coupled_carry},
                     {"slide_set", c.slide_set},
                     {"enumeration_cap", c.enumeration_cap}};
}

void from_json(const nlohmann::json& j, WorldConfig& c) {
  j.at("grid_size").get_to(c.grid_size);
  j.at("patch_size").get_to(c.patch_size);
  j.at("palette").get_to(c.palette);
  j.at("n_sprites").get_to(c.n_sprites);
  j.at("sprite_min").get_to(c.sprite_min);
  j.at("sprite_max").get_to(c.sprite_max);
  j.at("velocity_set").get_to(c.velocity_set);
  j.at("velocity_sets").get_to(c.velocity_sets);
  j.at("depth_layers").get_to(c.depth_layers);
  j.at("background_depth").get_to(c.background_depth);
  j.at("motion_noise").get_to(c.motion_noise);
  j.at("frames").get_to(c.frames);
  j.at("seed").get_to(c.seed);
  j.at("camera_shift_set").get_to(c.camera_shift_set);
  j.at("parallax_k").get_to(c.parallax_k);
  j.at("checker_background").get_to(c.checker_background);
  j.at("checker_cell").get_to(c.checker_cell);
  j.at("pos_step").get_to(c.pos_step);
  j.at("tracer_prob").get_to(c.tracer_prob);
  j.at("coupled_carry").get_to(c.coupled_carry);
  j.at("slide_set").get_to(c.slide_set);
  j.at("enumeration_cap").get_to(c.enumeration_cap);
}

Vec2 parallax_shift(Vec2 c, int z, int k) {
  return {round_away(static_cast<double>(c.x) * k / z),
          round_away(static_cast<double>(c.y) * k / z)};
}

Vec2 sprite_screen_pos(const Sprite& s, Vec2 camera, int k) {
  return s.pos - parallax_shift(camera, s.depth, k);
}

RenderResult render(const WorldState& state, const WorldConfig& cfg) {
  const int n = cfg.grid_size;
  RenderResult rr{Image(n, n, 0), Grid<uint8_t>(n, n, 0),
                  Grid<int16_t>(n, n, static_cast<int16_t>(cfg.background_depth))};
  Vec2 bg_par = parallax_shift(state.camera, cfg.background_depth, cfg.parallax_k);
  if (cfg.checker_background) {
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        // The checker is fixed in world coordinates, so it slides under
        // camera motion like any surface at background depth.
        int wx = x + bg_par.x, wy = y + bg_par.y;
        int parity = floordiv(wx, cfg.checker_cell) + floordiv(wy, cfg.checker_cell);
        rr.frame.at(x, y) = static_cast<uint8_t>(((parity % 2) + 2) % 2);
      }
  }

  // Far to near; equal depths resolve with the higher sprite index on top.
  std::vector<int> order(state.sprites.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return state.sprites[a].depth > state.sprites[b].depth;
  });
  for (int i : order) {
    const Sprite& s = state.sprites[i];
    Vec2 sp = sprite_screen_pos(s, state.camera, cfg.parallax_k);
    for (int dy = 0; dy < s.size.y; ++dy)
      for (int dx = 0; dx < s.size.x; ++dx) {
        int x = sp.x + dx, y = sp.y + dy;
        if (!rr.frame.in_bounds(x, y)) continue;
        rr.frame.at(x, y) = s.color;
        rr.owner.at(y, x) = static_cast<uint8_t>(i + 1);
        rr.depth.at(y, x) = static_cast<int16_t>(s.depth);
      }
  }

  if (state.tracer.present) {
    const TracerState& tr = state.tracer;
    Vec2 base;
    uint8_t want = static_cast<uint8_t>(tr.owner + 1);
    if (tr.owner < 0) {
      base = tr.anchor - bg_par;
    } else {
      if (tr.owner >= static_cast<int>(state.sprites.size()))
        throw InvariantError("tracer attached to a missing sprite");
      base = sprite_screen_pos(state.sprites[tr.owner], state.camera,
                               cfg.parallax_k) +
             tr.anchor;
    }
    // Tracer is paint on its surface: drawn only where that surface is
    // visible, and it does not alter the ownership or depth maps.
    for (int dy = 0; dy < tr.size; ++dy)
      for (int dx = 0; dx < tr.size; ++dx) {
        int x = base.x + dx, y = base.y + dy;
        if (rr.frame.in_bounds(x, y) && rr.owner.at(y, x) == want)
          rr.frame.at(x, y) = kTracerIndex;
      }
  }
  return rr;
}

std::vector<Vec2> step_world(WorldState& state, const WorldConfig& cfg,
                             Vec2 shift) {
  state.camera = state.camera + shift;
  std::vector<Vec2> realized(state.sprites.size(), Vec2{0, 0});
  for (size_t i = 0; i < state.sprites.size(); ++i) {
    Sprite& s = state.sprites[i];
    Vec2 want = s.vel;
    if (cfg.coupled_carry && i == 1) want = realized[0] + s.vel;
    Vec2 old = s.pos;
    int nx = old.x + want.x, ny = old.y + want.y;
    int max_x = cfg.grid_size - s.size.x, max_y = cfg.grid_size - s.size.y;
    if (nx < 0 || nx > max_x) {
      nx = std::clamp(nx, 0, max_x);
      s.vel.x = -s.vel.x;
    }
    if (ny < 0 || ny > max_y) {
      ny = std::clamp(ny, 0, max_y);
      s.vel.y = -s.vel.y;
    }
    s.pos = {nx, ny};
    realized[i] = s.pos - old;
  }
  return realized;
}

void apply_motion_noise(WorldState& state, const WorldConfig& cfg, Rng& rng) {
  for (size_t i = 0; i < state.sprites.size(); ++i) {
    if (!rng.bernoulli(cfg.motion_noise)) continue;
    const auto& set = (cfg.coupled_carry && i == 1)
                          ? cfg.slide_set
                          : cfg.velocities_of(static_cast<int>(i));
    state.sprites[i].vel = set[rng.uniform_u64(set.size())];
  }
}

WorldState sample_initial_state(const WorldConfig& cfg, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    WorldState st;
    st.camera = {0, 0};
    for (int i = 0; i < cfg.n_sprites; ++i) {
      Sprite s;
      int side = cfg.sprite_min +
                 static_cast<int>(rng.uniform_u64(
                     static_cast<uint64_t>(cfg.sprite_max - cfg.sprite_min) + 1));
      s.size = {side, side};
      int sx = (cfg.grid_size - side) / cfg.pos_step + 1;
      int sy = (cfg.grid_size - side) / cfg.pos_step + 1;
      s.pos = {static_cast<int>(rng.uniform_u64(sx)) * cfg.pos_step,
               static_cast<int>(rng.uniform_u64(sy)) * cfg.pos_step};
      const auto& vs = (cfg.coupled_carry && i == 1) ? cfg.slide_set
                                                     : cfg.velocities_of(i);
      s.vel = vs[rng.uniform_u64(vs.size())];
      s.color = static_cast<uint8_t>(cfg.sprite_color(i));
      s.depth = cfg.sprite_depth(i);
      st.sprites.push_back(s);
    }
    bool ok = true;
    for (size_t i = 0; i + 1 < st.sprites.size() && ok; ++i)
      for (size_t j = i + 1; j < st.sprites.size() && ok; ++j) {
        const Sprite &a = st.sprites[i], &b = st.sprites[j];
        if (a.depth == b.depth && boxes_overlap(a.pos, a.size, b.pos, b.size))
          ok = false;
      }
    if (ok) return st;
  }
  throw FittingError("could not place sprites without same-depth overlap");
}

Episode gen_episode(const WorldConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  WorldState init = sample_initial_state(cfg, rng);
  if (cfg.tracer_prob > 0.0 && rng.bernoulli(cfg.tracer_prob)) {
    Vec2 pos{static_cast<int>(rng.uniform_u64(cfg.grid_size)),
             static_cast<int>(rng.uniform_u64(cfg.grid_size))};
    attach_tracer(init, cfg, pos, 1);
  }
  const int steps = cfg.frames - 1;
  std::vector<Vec2> shifts(steps);
  for (int t = 0; t < steps; ++t)
    shifts[t] = cfg.camera_shift_set[rng.uniform_u64(cfg.camera_shift_set.size())];

  std::vector<std::vector<Vec2>> noise(steps);
  if (cfg.motion_noise > 0.0) {
    WorldState sim = init;
    for (int t = 0; t < steps; ++t) {
      if (t > 0) {
        bool any = false;
        std::vector<Vec2> vels(sim.sprites.size());
        for (size_t i = 0; i < sim.sprites.size(); ++i) {
          if (rng.bernoulli(cfg.motion_noise)) {
            const auto& set = (cfg.coupled_carry && i == 1)
                                  ? cfg.slide_set
                                  : cfg.velocities_of(static_cast<int>(i));
            sim.sprites[i].vel = set[rng.uniform_u64(set.size())];
            any = true;
          }
          vels[i] = sim.sprites[i].vel;
        }
        if (any) noise[t] = std::move(vels);
      }
      step_world(sim, cfg, shifts[t]);
    }
  }
  return materialize_episode(cfg, std::move(init), shifts, noise);
}

Episode materialize_episode(const WorldConfig& cfg, WorldState initial,
                            const std::vector<Vec2>& shifts,
                            const std::vector<std::vector<Vec2>>& noise_vels) {
  const int steps = cfg.frames - 1;
  if (static_cast<int>(shifts.size()) != steps)
    throw ShapeError("materialize: shift count != frames-1");
  Episode ep;
  ep.config = cfg;
  ep.camera_shifts = shifts;
  std::vector<std::vector<Vec2>> realized(steps);

  WorldState st = std::move(initial);
  for (int t = 0; t < cfg.frames; ++t) {
    ep.states.push_back(st);
    RenderResult rr = render(st, cfg);
    ep.frames.push_back(std::move(rr.frame));
    ep.segments.push_back(std::move(rr.owner));
    ep.depth.push_back(std::move(rr.depth));
    if (t < steps) {
      if (t < static_cast<int>(noise_vels.size()) && !noise_vels[t].empty()) {
        if (noise_vels[t].size() != st.sprites.size())
          throw ShapeError("materialize: noise velocity count mismatch");
        for (size_t i = 0; i < st.sprites.size(); ++i)
          st.sprites[i].vel = noise_vels[t][i];
      }
      realized[t] = step_world(st, cfg, shifts[t]);
    }
  }

  const int n = cfg.grid_size;
  for (int t = 0; t < steps; ++t) {
    Grid<Vec2> fl(n, n, Vec2{0, 0});
    Vec2 cam0 = ep.states[t].camera, cam1 = ep.states[t + 1].camera;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        int o = ep.segments[t].at(y, x);
        int z = o == 0 ? cfg.background_depth
                       : ep.states[t].sprites[o - 1].depth;
        Vec2 dpar = parallax_shift(cam1, z, cfg.parallax_k) -
                    parallax_shift(cam0, z, cfg.parallax_k);
        Vec2 dw = o == 0 ? Vec2{0, 0} : realized[t][o - 1];
        fl.at(y, x) = dw - dpar;
      }
    ep.flow.push_back(std::move(fl));
  }

  for (int t = 0; t < cfg.frames && !ep.sprite_fully_occluded; ++t) {
    std::vector<int> visible(cfg.n_sprites, 0);
    for (uint8_t o : ep.segments[t].data)
      if (o > 0) visible[o - 1] += 1;
    for (int c : visible)
      if (c == 0) ep.sprite_fully_occluded = true;
  }
  return ep;
}

Grid<Vec2> patch_flow(const Episode& ep, int step) {
  if (step < 0 || step >= static_cast<int>(ep.flow.size()))
    throw ShapeError("patch_flow: step out of range");
  const int p = ep.config.patch_size;
  const int pps = ep.config.patches_per_side();
  Grid<Vec2> out(pps, pps, Vec2{0, 0});
  for (int pr = 0; pr < pps; ++pr)
    for (int pc = 0; pc < pps; ++pc) {
      std::map<Vec2, int> counts;
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          counts[ep.flow[step].at(pr * p + dy, pc * p + dx)] += 1;
      Vec2 best{0, 0};
      int best_count = -1;
      for (const auto& [v, c] : counts) {
        bool better = c > best_count;
        if (c == best_count) {
          if (v.norm2_sq() != best.norm2_sq())
            better = v.norm2_sq() < best.norm2_sq();
          else
            better = std::pair(v.x, v.y) < std::pair(best.x, best.y);
        }
        if (better) {
          best = v;
          best_count = c;
        }
      }
      out.at(pr, pc) = best;
    }
  return out;
}

bool attach_tracer(WorldState& state, const WorldConfig& cfg, Vec2 pos,
                   int size) {
  if (pos.x < 0 || pos.y < 0 || pos.x + size > cfg.grid_size ||
      pos.y + size > cfg.grid_size)
    return false;
  RenderResult rr = render(state, cfg);
  int o = rr.owner.at(pos.y, pos.x);
  TracerState tr;
  tr.present = true;
  tr.size = size;
  tr.owner = o - 1;
  if (o == 0) {
    tr.anchor = pos + parallax_shift(state.camera, cfg.background_depth,
                                     cfg.parallax_k);
  } else {
    tr.anchor = pos - sprite_screen_pos(state.sprites[o - 1], state.camera,
                                        cfg.parallax_k);
  }
  state.tracer = tr;
  return true;
}

namespace {

std::string frame_name(const char* stem, int t, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%02d%s", stem, t, ext);
  return buf;
}

}  // namespace

void export_episode(const Episode& ep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const int n = ep.config.grid_size;
  for (int t = 0; t < static_cast<int>(ep.frames.size()); ++t) {
    write_ppm(dir / frame_name("frame", t, ".ppm"),
              to_rgb(ep.frames[t], ep.config.palette));
    std::vector<int16_t> seg(ep.segments[t].data.begin(),
                             ep.segments[t].data.end());
    write_i16_array(dir / frame_name("segments", t, ""), seg, {n, n});
    write_i16_array(dir / frame_name("depth", t, ""), ep.depth[t].data, {n, n});
  }
  for (int t = 0; t < static_cast<int>(ep.flow.size()); ++t) {
    std::vector<int16_t> fl;
    fl.reserve(static_cast<size_t>(n) * n * 2);
    for (const Vec2& v : ep.flow[t].data) {
      fl.push_back(static_cast<int16_t>(v.x));
      fl.push_back(static_cast<int16_t>(v.y));
    }
    write_i16_array(dir / frame_name("flow", t, ""), fl, {n, n, 2});
  }
  nlohmann::json meta{{"config", ep.config},
                      {"states", ep.states},
                      {"camera_shifts", ep.camera_shifts},
                      {"sprite_fully_occluded", ep.sprite_fully_occluded},
                      {"frames", static_cast<int>(ep.frames.size())}};
  std::ofstream js(dir / "episode.json");
  js << meta.dump(2) << "\n";
  if (!js) throw IoError("episode.json write failed");
  world_to_kv(ep.config).write_file(dir / "config.txt");
}

Episode import_episode(const std::filesystem::path& dir) {
  std::ifstream js(dir / "episode.json");
  if (!js) throw IoError("missing episode.json in " + dir.string());
  nlohmann::json meta = nlohmann::json::parse(js);
  Episode ep;
  meta.at("config").get_to(ep.config);
  meta.at("states").get_to(ep.states);
  meta.at("camera_shifts").get_to(ep.camera_shifts);
  meta.at("sprite_fully_occluded").get_to(ep.sprite_fully_occluded);
  int frames = meta.at("frames").get<int>();

  std::map<Rgb, uint8_t> inverse;
  for (size_t i = 0; i < ep.config.palette.size(); ++i)
    inverse[ep.config.palette[i]] = static_cast<uint8_t>(i);
  inverse[kTracerColor] = kTracerIndex;

  const int n = ep.config.grid_size;
  for (int t = 0; t < frames; ++t) {
    RgbImage rgb = read_ppm(dir / frame_name("frame", t, ".ppm"));
    if (rgb.width != n || rgb.height != n)
      throw ShapeError("imported frame has wrong size");
    Image img(n, n);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        auto it = inverse.find(rgb.at(x, y));
        if (it == inverse.end())
          throw ShapeError("imported frame pixel outside palette");
        img.at(x, y) = it->second;
      }
    ep.frames.push_back(std::move(img));

    I16Array seg = read_i16_array(dir / frame_name("segments", t, ""));
    if (seg.shape != std::vector<int>{n, n})
      throw ShapeError("segments array shape mismatch");
    Grid<uint8_t> sg(n, n);
    for (size_t i = 0; i < seg.data.size(); ++i)
      sg.data[i] = static_cast<uint8_t>(seg.data[i]);
    ep.segments.push_back(std::move(sg));

    I16Array dep = read_i16_array(dir / frame_name("depth", t, ""));
    if (dep.shape != std::vector<int>{n, n})
      throw ShapeError("depth array shape mismatch");
    Grid<int16_t> dg(n, n);
    dg.data = dep.data;
    ep.depth.push_back(std::move(dg));
  }
  for (int t = 0; t + 1 < frames; ++t) {
    I16Array fl = read_i16_array(dir / frame_name("flow", t, ""));
    if (fl.shape != std::vector<int>{n, n, 2})
      throw ShapeError("flow array shape mismatch");
    Grid<Vec2> fg(n, n);
    for (size_t i = 0; i < fg.data.size(); ++i)
      fg.data[i] = {fl.data[2 * i], fl.data[2 * i + 1]};
    ep.flow.push_back(std::move(fg));
  }
  return ep;
}

KvConfig world_to_kv(const WorldConfig& cfg, const std::string& prefix) {
  KvConfig kv;
  auto set = [&](const std::string& k, const std::string& v) {
    kv.set(prefix + k, v);
  };
  set("grid_size", std::to_string(cfg.grid_size));
  set("patch_size", std::to_string(cfg.patch_size));
  set("palette", format_palette(cfg.palette));
  set("n_sprites", std::to_string(cfg.n_sprites));
  set("sprite_min", std::to_string(cfg.sprite_min));
  set("sprite_max", std::to_string(cfg.sprite_max));
  set("velocity_set", format_vec2_list(cfg.velocity_set));
  for (size_t i = 0; i < cfg.velocity_sets.size(); ++i)
    if (!cfg.velocity_sets[i].empty())
      set("velocity_set_" + std::to_string(i),
          format_vec2_list(cfg.velocity_sets[i]));
  {
    std::string s;
    for (size_t i = 0; i < cfg.depth_layers.size(); ++i)
      s += (i ? "," : "") + std::to_string(cfg.depth_layers[i]);
    set("depth_layers", s);
  }
  set("background_depth", std::to_string(cfg.background_depth));
  set("motion_noise", std::to_string(cfg.motion_noise));
  set("frames", std::to_string(cfg.frames));
  set("seed", std::to_string(cfg.seed));
  set("camera_shift_set", format_vec2_list(cfg.camera_shift_set));
  set("parallax_k", std::to_string(cfg.parallax_k));
  set("checker_background", cfg.checker_background ? "true" : "false");
  set("checker_cell", std::to_string(cfg.checker_cell));
  set("pos_step", std::to_string(cfg.pos_step));
  set("tracer_prob", std::to_string(cfg.tracer_prob));
  set("coupled_carry", cfg.coupled_carry ? "true" : "false");
  set("slide_set", format_vec2_list(cfg.slide_set));
  set("enumeration_cap", std::to_string(cfg.enumeration_cap));
  return kv;
}

WorldConfig world_from_kv(const KvConfig& kv, const std::string& prefix) {
  WorldConfig c;
  auto key = [&](const char* k) { return prefix + k; };
  c.grid_size = static_cast<int>(kv.get_int(key("grid_size"), c.grid_size));
  c.patch_size = static_cast<int>(kv.get_int(key("patch_size"), c.patch_size));
  if (kv.has(key("palette"))) c.palette = parse_palette(kv.get(key("palette")));
  c.n_sprites = static_cast<int>(kv.get_int(key("n_sprites"), c.n_sprites));
  c.sprite_min = static_cast<int>(kv.get_int(key("sprite_min"), c.sprite_min));
  c.sprite_max = static_cast<int>(kv.get_int(key("sprite_max"), c.sprite_max));
  if (kv.has(key("velocity_set")))
    c.velocity_set = parse_vec2_list(kv.get(key("velocity_set")));
  for (int i = 0; i < 8; ++i) {
    std::string k = key(("velocity_set_" + std::to_string(i)).c_str());
    if (!kv.has(k)) continue;
    if (static_cast<int>(c.velocity_sets.size()) <= i) c.velocity_sets.resize(i + 1);
    c.velocity_sets[i] = parse_vec2_list(kv.get(k));
  }
  if (kv.has(key("depth_layers")))
    c.depth_layers = parse_int_list(kv.get(key("depth_layers")));
  c.background_depth =
      static_cast<int>(kv.get_int(key("background_depth"), c.background_depth));
  c.motion_noise = kv.get_double(key("motion_noise"), c.motion_noise);
  c.frames = static_cast<int>(kv.get_int(key("frames"), c.frames));
  c.seed = kv.get_u64(key("seed"), c.seed);
  if (kv.has(key("camera_shift_set")))
    c.camera_shift_set = parse_vec2_list(kv.get(key("camera_shift_set")));
  c.parallax_k = static_cast<int>(kv.get_int(key("parallax_k"), c.parallax_k));
  c.checker_background =
      kv.get_bool(key("checker_background"), c.checker_background);
  c.checker_cell = static_cast<int>(kv.get_int(key("checker_cell"), c.checker_cell));
  c.pos_step = static_cast<int>(kv.get_int(key("pos_step"), c.pos_step));
  c.tracer_prob = kv.get_double(key("tracer_prob"), c.tracer_prob);
  c.coupled_carry = kv.get_bool(key("coupled_carry"), c.coupled_carry);
  if (kv.has(key("slide_set")))
    c.slide_set = parse_vec2_list(kv.get(key("slide_set")));
  c.enumeration_cap = kv.get_u64(key("enumeration_cap"), c.enumeration_cap);
  c.validate();
  return c;
}

std::vector<std::string> world_kv_keys(const std::string& prefix) {
  std::vector<std::string> keys{
      "grid_size",  "patch_size",       "palette",
      "n_sprites",  "sprite_min",       "sprite_max",
      "velocity_set", "depth_layers",   "background_depth",
      "motion_noise", "frames",         "seed",
      "camera_shift_set", "parallax_k", "checker_background",
      "checker_cell", "pos_step",       "tracer_prob",
      "coupled_carry", "slide_set",     "enumeration_cap"};
  for (int i = 0; i < 8; ++i)
    keys.push_back("velocity_set_" + std::to_string(i));
  for (auto& k : keys) k = prefix + k;
  return keys;
}

}  // namespace psi
