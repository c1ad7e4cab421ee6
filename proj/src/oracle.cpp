#include "psi/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

namespace psi {

namespace {

// Collapses a multiset prior into (value, probability) pairs so duplicate
// entries cost one enumeration branch instead of several.
std::vector<std::pair<Vec2, double>> weighted_unique(
    const std::vector<Vec2>& set) {
  std::map<Vec2, int> counts;
  for (Vec2 v : set) counts[v] += 1;
  std::vector<std::pair<Vec2, double>> out;
  out.reserve(counts.size());
  for (const auto& [v, c] : counts)
    out.emplace_back(v, static_cast<double>(c) / set.size());
  return out;
}

bool same_depth_overlap(const std::vector<Sprite>& sprites) {
  for (size_t i = 0; i + 1 < sprites.size(); ++i)
    for (size_t j = i + 1; j < sprites.size(); ++j) {
      const Sprite &a = sprites[i], &b = sprites[j];
      if (a.depth != b.depth) continue;
      if (a.pos.x < b.pos.x + b.size.x && b.pos.x < a.pos.x + a.size.x &&
          a.pos.y < b.pos.y + b.size.y && b.pos.y < a.pos.y + a.size.y)
        return true;
    }
  return false;
}

std::string datum_key(const Datum& d) {
  std::string s;
  s.reserve(d.size() * 7);
  for (const auto& [p, v] : d) {
    s.push_back(static_cast<char>(p.modality));
    s.push_back(static_cast<char>(p.frame));
    s.push_back(static_cast<char>(p.row));
    s.push_back(static_cast<char>(p.col));
    s.push_back(static_cast<char>(p.level));
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>(v >> 8));
  }
  return s;
}

}  // namespace

struct OracleWorldModel::TokenMemo {
  std::shared_mutex mutex;
  // Patch palette bytes -> hierarchy codes. Keyed on content so traces that
  // render the same patch share one encode.
  std::unordered_map<std::string, std::vector<Code>> patch_codes;
};

OracleWorldModel::OracleWorldModel(WorldConfig cfg, ModalityRegistry registry,
                                   VocabLayout vocab, Codebook rgb_book,
                                   std::optional<Codebook> flow_book)
    : cfg_(std::move(cfg)),
      registry_(std::move(registry)),
      vocab_(std::move(vocab)),
      rgb_book_(std::move(rgb_book)),
      flow_book_(std::move(flow_book)),
      memo_(std::make_shared<TokenMemo>()) {
  cfg_.validate();
  vocab_.validate();
  if (cfg_.motion_noise != 0.0)
    throw CapabilityError("exact enumeration requires motion_noise = 0");
  if (rgb_book_.modality() != Modality::rgb ||
      rgb_book_.patch_size() != cfg_.patch_size)
    throw ConfigError("rgb codebook does not match the world patch size");
  if (registry_.rows() != cfg_.patches_per_side() ||
      registry_.cols() != cfg_.patches_per_side() ||
      registry_.frames() != cfg_.frames ||
      registry_.rgb_depth() != rgb_book_.depth())
    throw ConfigError("registry shape does not match world/codebook");
  if (static_cast<int>(vocab_.rgb_levels.size()) < rgb_book_.depth())
    throw VocabularyError("vocabulary has fewer levels than the codebook");
  if (flow_book_ && flow_book_->modality() != Modality::flow)
    throw ConfigError("flow codebook has the wrong modality");
  if (registry_.has_flow() && !flow_book_)
    throw CapabilityError("registry addresses flow but no flow codebook given");
}

double OracleWorldModel::prior_branch_count() const {
  double total = 1.0;
  for (int i = 0; i < cfg_.n_sprites; ++i) {
    double placements = 0.0;
    for (int side = cfg_.sprite_min; side <= cfg_.sprite_max; ++side) {
      double slots = (cfg_.grid_size - side) / cfg_.pos_step + 1;
      placements += slots * slots;
    }
    const auto& vels = (cfg_.coupled_carry && i == 1) ? cfg_.slide_set
                                                      : cfg_.velocities_of(i);
    total *= placements * weighted_unique(vels).size();
  }
  double shifts = weighted_unique(cfg_.camera_shift_set).size();
  for (int t = 0; t < cfg_.frames - 1; ++t) total *= shifts;
  double tracer_branches = (cfg_.tracer_prob < 1.0 ? 1.0 : 0.0) +
                           (cfg_.tracer_prob > 0.0
                                ? static_cast<double>(cfg_.grid_size) * cfg_.grid_size
                                : 0.0);
  return total * tracer_branches;
}

Code OracleWorldModel::token_of(const WorldTrace& trace,
                                const Pointer& p) const {
  switch (p.modality) {
    case Modality::rgb: {
      if (p.frame >= trace.renders.size() || p.level >= rgb_book_.depth() ||
          p.row >= cfg_.patches_per_side() || p.col >= cfg_.patches_per_side())
        throw VocabularyError("rgb pointer out of range: " + p.to_string());
      const Image& img = trace.renders[p.frame].frame;
      const int ps = cfg_.patch_size;
      std::string key(static_cast<size_t>(ps) * ps, '\0');
      for (int dy = 0; dy < ps; ++dy)
        for (int dx = 0; dx < ps; ++dx)
          key[static_cast<size_t>(dy) * ps + dx] = static_cast<char>(
              img.at(p.col * ps + dx, p.row * ps + dy));
      {
        std::shared_lock lock(memo_->mutex);
        auto it = memo_->patch_codes.find(key);
        if (it != memo_->patch_codes.end()) return it->second[p.level];
      }
      std::vector<float> vals(static_cast<size_t>(ps) * ps * 3);
      for (int dy = 0; dy < ps; ++dy)
        for (int dx = 0; dx < ps; ++dx) {
          uint8_t idx = static_cast<uint8_t>(key[static_cast<size_t>(dy) * ps + dx]);
          Rgb c = idx == kTracerIndex ? kTracerColor : cfg_.palette.at(idx);
          size_t base = (static_cast<size_t>(dy) * ps + dx) * 3;
          vals[base] = c.r;
          vals[base + 1] = c.g;
          vals[base + 2] = c.b;
        }
      auto codes = rgb_book_.encode_patch(vals);
      Code out = codes[p.level];
      std::unique_lock lock(memo_->mutex);
      memo_->patch_codes.emplace(std::move(key), std::move(codes));
      return out;
    }
    case Modality::camera: {
      if (p.frame >= trace.shifts.size() || p.row > 1)
        throw VocabularyError("camera pointer out of range: " + p.to_string());
      Vec2 s = trace.shifts[p.frame];
      return vocab_.camera_code(p.row == 0 ? s.x : s.y);
    }
    case Modality::flow: {
      if (!flow_book_)
        throw CapabilityError("flow token requested without a flow codebook");
      if (p.frame >= trace.patch_flows.size() ||
          p.row >= cfg_.patches_per_side() || p.col >= cfg_.patches_per_side())
        throw VocabularyError("flow pointer out of range: " + p.to_string());
      return encode_flow(*flow_book_, trace.patch_flows[p.frame].at(p.row, p.col))
          .code;
    }
  }
  throw VocabularyError("unknown modality");
}

std::shared_ptr<const OracleSupport> OracleWorldModel::enumerate(
    const Datum& datum) const {
  if (prior_branch_count() > static_cast<double>(cfg_.enumeration_cap))
    throw CapExceededError("latent branch count exceeds enumeration_cap");

  auto sup = std::make_shared<OracleSupport>();
  const int steps = cfg_.frames - 1;
  const auto shift_choices = weighted_unique(cfg_.camera_shift_set);
  const Code unknown_flow = vocab_.unknown_flow_code();

  auto consider = [&](const WorldState& init, std::vector<Vec2> shifts,
                      double w) {
    Episode ep = materialize_episode(cfg_, init, shifts, {});
    WorldTrace tr;
    tr.weight = w;
    tr.shifts = std::move(shifts);
    if (flow_book_)
      for (int t = 0; t < steps; ++t) tr.patch_flows.push_back(patch_flow(ep, t));
    tr.states = std::move(ep.states);
    for (int t = 0; t < cfg_.frames; ++t)
      tr.renders.push_back(RenderResult{std::move(ep.frames[t]),
                                        std::move(ep.segments[t]),
                                        std::move(ep.depth[t])});
    for (const auto& [ptr, code] : datum) {
      // An unknown-flow code carries no information about the world, so it
      // never rules a branch out.
      if (ptr.modality == Modality::flow && code == unknown_flow) continue;
      if (token_of(tr, ptr) != code) return;
    }
    sup->total_weight += tr.weight;
    sup->worlds.push_back(std::move(tr));
  };

  auto expand_steps = [&](const WorldState& init, double w) {
    std::vector<int> odo(steps, 0);
    while (true) {
      std::vector<Vec2> shifts(steps);
      double ws = w;
      for (int t = 0; t < steps; ++t) {
        shifts[t] = shift_choices[odo[t]].first;
        ws *= shift_choices[odo[t]].second;
      }
      consider(init, std::move(shifts), ws);
      int t = 0;
      for (; t < steps; ++t) {
        if (++odo[t] < static_cast<int>(shift_choices.size())) break;
        odo[t] = 0;
      }
      if (t == steps) break;
    }
  };

  auto expand_tracer = [&](std::vector<Sprite> sprites, double w) {
    if (same_depth_overlap(sprites)) return;  // invalid placement branch
    WorldState base;
    base.sprites = std::move(sprites);
    base.camera = {0, 0};
    if (cfg_.tracer_prob < 1.0) expand_steps(base, w * (1.0 - cfg_.tracer_prob));
    if (cfg_.tracer_prob > 0.0) {
      double wp = w * cfg_.tracer_prob /
                  (static_cast<double>(cfg_.grid_size) * cfg_.grid_size);
      for (int y = 0; y < cfg_.grid_size; ++y)
        for (int x = 0; x < cfg_.grid_size; ++x) {
          WorldState with = base;
          if (!attach_tracer(with, cfg_, {x, y}, 1)) continue;
          expand_steps(with, wp);
        }
    }
  };

  std::vector<Sprite> acc;
  std::function<void(int, double)> rec = [&](int i, double w) {
    if (i == cfg_.n_sprites) {
      expand_tracer(acc, w);
      return;
    }
    const int nsides = cfg_.sprite_max - cfg_.sprite_min + 1;
    const auto& vel_set = (cfg_.coupled_carry && i == 1)
                              ? cfg_.slide_set
                              : cfg_.velocities_of(i);
    const auto vels = weighted_unique(vel_set);
    for (int side = cfg_.sprite_min; side <= cfg_.sprite_max; ++side) {
      int slots = (cfg_.grid_size - side) / cfg_.pos_step + 1;
      double wp = w / nsides / slots / slots;
      for (int sy = 0; sy < slots; ++sy)
        for (int sx = 0; sx < slots; ++sx)
          for (const auto& [vel, vw] : vels) {
            Sprite s;
            s.pos = {sx * cfg_.pos_step, sy * cfg_.pos_step};
            s.vel = vel;
            s.size = {side, side};
            s.color = static_cast<uint8_t>(cfg_.sprite_color(i));
            s.depth = cfg_.sprite_depth(i);
            acc.push_back(s);
            rec(i + 1, wp * vw);
            acc.pop_back();
          }
    }
  };
  rec(0, 1.0);
  return sup;
}

std::shared_ptr<const OracleSupport> OracleWorldModel::support_for(
    const Datum& datum) const {
  const std::string key = datum_key(datum);
  {
    std::shared_lock lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) {
      if (it->second->worlds.empty())
        throw ZeroSupportError("no world explains the conditioning set");
      return it->second;
    }
  }
  auto sup = enumerate(datum);
  {
    std::unique_lock lock(cache_mutex_);
    cache_.emplace(key, sup);
  }
  if (sup->worlds.empty())
    throw ZeroSupportError("no world explains the conditioning set");
  return sup;
}

void OracleWorldModel::clear_cache() const {
  std::unique_lock lock(cache_mutex_);
  cache_.clear();
  std::unique_lock mlock(memo_->mutex);
  memo_->patch_codes.clear();
}

std::vector<DistVec> OracleWorldModel::predict_parallel(
    const Datum& conditioning, std::span<const Pointer> queries) const {
  auto sup = support_for(conditioning);
  std::vector<DistVec> out;
  out.reserve(queries.size());
  for (const Pointer& q : queries) {
    DistVec dist(vocab_.vocab_size, 0.0);
    for (const WorldTrace& tr : sup->worlds)
      dist[token_of(tr, q)] += tr.weight;
    for (double& d : dist) d /= sup->total_weight;
    out.push_back(std::move(dist));
  }
  return out;
}

Datum OracleWorldModel::sample_sequential(const Datum& conditioning,
                                          std::span<const Pointer> targets,
                                          double temperature, int top_k,
                                          Rng& rng) const {
  auto sup = support_for(conditioning);
  std::vector<size_t> alive(sup->worlds.size());
  for (size_t i = 0; i < alive.size(); ++i) alive[i] = i;

  Datum out;
  for (const Pointer& t : targets) {
    if (conditioning.contains(t) || out.contains(t))
      throw OrderingError("sequential target already has a value");
    DistVec dist(vocab_.vocab_size, 0.0);
    double total = 0.0;
    for (size_t i : alive) {
      double w = sup->worlds[i].weight;
      dist[token_of(sup->worlds[i], t)] += w;
      total += w;
    }
    if (total <= 0.0)
      throw ZeroSupportError("sequential sampling lost all support");
    for (double& d : dist) d /= total;
    Code c = static_cast<Code>(sample_dist(dist, temperature, top_k, rng));
    std::vector<size_t> next;
    next.reserve(alive.size());
    for (size_t i : alive)
      if (token_of(sup->worlds[i], t) == c) next.push_back(i);
    alive = std::move(next);
    out.insert(t, c);
  }
  return out;
}

double OracleWorldModel::log_prob(const Datum& conditioning,
                                  const Datum& assignment) const {
  auto sup = support_for(conditioning);
  const Code unknown_flow = vocab_.unknown_flow_code();
  double num = 0.0;
  for (const WorldTrace& tr : sup->worlds) {
    bool ok = true;
    for (const auto& [ptr, code] : assignment) {
      if (ptr.modality == Modality::flow && code == unknown_flow) continue;
      if (token_of(tr, ptr) != code) {
        ok = false;
        break;
      }
    }
    if (ok) num += tr.weight;
  }
  if (num <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(num / sup->total_weight);
}

}  // namespace psi
