#include "psi/sequence.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "psi/detail/binary.hpp"

namespace psi {

namespace {

using PatchKey = std::tuple<Modality, int, int, int>;

PatchKey key_of(const Pointer& p) {
  return {p.modality, p.frame, p.row, p.col};
}

void check_level_runs(std::span<const Pointer> order) {
  std::set<PatchKey> closed;
  size_t i = 0;
  while (i < order.size()) {
    PatchKey k = key_of(order[i]);
    if (closed.count(k))
      throw OrderingError("hierarchy levels of one patch must stay contiguous");
    int prev = order[i].level;
    ++i;
    while (i < order.size() && key_of(order[i]) == k) {
      if (order[i].level <= prev)
        throw OrderingError("hierarchy levels must ascend within a patch");
      prev = order[i].level;
      ++i;
    }
    closed.insert(k);
  }
}

// Group rank: rgb frame f sits at 3f; between consecutive frames, camera
// then flow for that step.
int group_rank(const Pointer& p) {
  switch (p.modality) {
    case Modality::rgb: return 3 * p.frame;
    case Modality::camera: return 3 * p.frame + 1;
    case Modality::flow: return 3 * p.frame + 2;
  }
  return 0;
}

}  // namespace

TokenSequence serialize(const Datum& datum, std::span<const Pointer> order,
                        const ModalityRegistry& registry) {
  if (order.size() != datum.size())
    throw OrderingError("order is not a permutation of the datum domain");
  check_level_runs(order);
  TokenSequence seq;
  seq.items.reserve(order.size() * 2);
  std::set<Pointer> seen;
  for (const Pointer& p : order) {
    if (!seen.insert(p).second)
      throw OrderingError("pointer repeated in order: " + p.to_string());
    if (!datum.contains(p))
      throw OrderingError("ordered pointer not in datum: " + p.to_string());
    seq.push_pair(registry.id_of(p), datum.at(p));
  }
  return seq;
}

Datum deserialize(const TokenSequence& seq, const ModalityRegistry& registry,
                  uint16_t vocab_size) {
  Datum out;
  const size_t pairs = seq.pair_count();
  for (size_t i = 0; i < pairs; ++i) {
    uint32_t pid = seq.items[2 * i];
    uint32_t val = seq.items[2 * i + 1];
    if (pid >= registry.pointer_count())
      throw MalformedSequenceError("pointer id past the registry: " +
                                   std::to_string(pid));
    Pointer p = registry.pointer_of(pid);
    if (val >= vocab_size)
      throw MalformedSequenceError("value past vocabulary: " +
                                   std::to_string(val));
    if (out.contains(p))
      throw MalformedSequenceError("duplicate pointer: " + p.to_string());
    out.insert(p, static_cast<Code>(val));
  }
  if (seq.has_trailing_pointer()) {
    if (seq.items.back() >= registry.pointer_count())
      throw MalformedSequenceError("query pointer id past the registry: " +
                                   std::to_string(seq.items.back()));
  }
  return out;
}

std::vector<Pointer> random_order(std::span<const Pointer> pointers,
                                  Rng& rng) {
  std::map<PatchKey, std::vector<Pointer>> blocks;
  for (const Pointer& p : pointers) blocks[key_of(p)].push_back(p);
  std::vector<std::vector<Pointer>> order;
  order.reserve(blocks.size());
  for (auto& [k, v] : blocks) {
    std::sort(v.begin(), v.end());
    order.push_back(std::move(v));
  }
  rng.shuffle(order);
  std::vector<Pointer> out;
  out.reserve(pointers.size());
  for (const auto& block : order)
    out.insert(out.end(), block.begin(), block.end());
  return out;
}

std::vector<Pointer> canonical_order(const Datum& datum) {
  std::vector<Pointer> out;
  out.reserve(datum.size());
  for (const auto& [p, v] : datum) out.push_back(p);
  std::sort(out.begin(), out.end(), [](const Pointer& a, const Pointer& b) {
    return std::tuple(group_rank(a), a.row, a.col, a.level) <
           std::tuple(group_rank(b), b.row, b.col, b.level);
  });
  return out;
}

TokenSequence build_layout(std::span<const LayoutGroup> groups,
                           const ModalityRegistry& registry, Rng& rng) {
  std::set<Pointer> all;
  TokenSequence out;
  for (const LayoutGroup& g : groups) {
    for (const auto& [p, v] : g.datum)
      if (!all.insert(p).second)
        throw OrderingError("layout groups overlap at " + p.to_string());
    std::vector<Pointer> order;
    if (g.order == GroupOrder::random) {
      std::vector<Pointer> dom;
      for (const auto& [p, v] : g.datum) dom.push_back(p);
      order = random_order(dom, rng);
    } else {
      order = canonical_order(g.datum);
    }
    TokenSequence part = serialize(g.datum, order, registry);
    out.items.insert(out.items.end(), part.items.begin(), part.items.end());
  }
  return out;
}

void save_sequence(const std::filesystem::path& path, const TokenSequence& seq,
                   const ModalityRegistry& registry, uint16_t vocab_size) {
  auto os = detail::open_out(path);
  detail::write_bytes(os, "LRAS", 4);
  detail::write_pod<uint16_t>(os, 1);  // format version
  nlohmann::json reg;
  to_json(reg, registry);
  std::string reg_s = reg.dump();
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(reg_s.size()));
  detail::write_bytes(os, reg_s.data(), reg_s.size());
  detail::write_pod<uint16_t>(os, vocab_size);
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(seq.items.size()));
  for (uint32_t item : seq.items) detail::write_pod<uint32_t>(os, item);
  if (!os) throw IoError("write failed: " + path.string());
}

LoadedSequence load_sequence(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  detail::expect_magic(is, "LRAS");
  uint16_t version = detail::read_pod<uint16_t>(is);
  if (version != 1)
    throw IoError("unsupported sequence format version " +
                  std::to_string(version));
  uint32_t reg_len = detail::read_pod<uint32_t>(is);
  std::string reg_s(reg_len, '\0');
  detail::read_bytes(is, reg_s.data(), reg_len);
  LoadedSequence out;
  from_json(nlohmann::json::parse(reg_s), out.registry);
  out.vocab_size = detail::read_pod<uint16_t>(is);
  uint32_t n = detail::read_pod<uint32_t>(is);
  out.seq.items.resize(n);
  for (uint32_t i = 0; i < n; ++i)
    out.seq.items[i] = detail::read_pod<uint32_t>(is);
  return out;
}

}  // namespace psi
