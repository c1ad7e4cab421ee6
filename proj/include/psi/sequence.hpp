#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "psi/pointer.hpp"
#include "psi/registry.hpp"
#include "psi/rng.hpp"

namespace psi {

// Flat interleaved stream [p0, v0, p1, v1, ...]; pointer entries hold pointer
// ids, value entries hold vocabulary codes. A trailing lone pointer (odd
// length) is a query position awaiting its value.
struct TokenSequence {
  std::vector<uint32_t> items;

  size_t pair_count() const { return items.size() / 2; }
  bool has_trailing_pointer() const { return items.size() % 2 == 1; }

  void push_pair(uint32_t pointer_id, Code value) {
    items.push_back(pointer_id);
    items.push_back(value);
  }
  void push_pointer(uint32_t pointer_id) { items.push_back(pointer_id); }

  bool operator==(const TokenSequence&) const = default;
};

// Emits (pointer, value) pairs following `order` exactly. Every ordered
// pointer must be present in the datum; hierarchy levels of one patch must
// appear contiguously in ascending level order.
TokenSequence serialize(const Datum& datum, std::span<const Pointer> order,
                        const ModalityRegistry& registry);

// Inverse of serialize. Rejects malformed streams: out-of-range ids, codes
// past the vocabulary, duplicate pointers with conflicting values, or an
// interior lone pointer.
Datum deserialize(const TokenSequence& seq, const ModalityRegistry& registry,
                  uint16_t vocab_size);

// Uniform shuffle of patch blocks. Pointers of one patch (same modality,
// frame, row, col) stay contiguous with levels ascending; block order is
// drawn uniformly from the permutation group.
std::vector<Pointer> random_order(std::span<const Pointer> pointers, Rng& rng);

enum class GroupOrder { random, canonical };

struct LayoutGroup {
  Datum datum;
  GroupOrder order{GroupOrder::random};
};

// Concatenates per-group serializations in the given group order. Group
// domains must be pairwise disjoint.
TokenSequence build_layout(std::span<const LayoutGroup> groups,
                           const ModalityRegistry& registry, Rng& rng);

// Canonical pointer order of a datum: groups ranked frame-by-frame with
// camera then flow between consecutive rgb frames; row-major inside a group.
std::vector<Pointer> canonical_order(const Datum& datum);

void save_sequence(const std::filesystem::path& path, const TokenSequence& seq,
                   const ModalityRegistry& registry, uint16_t vocab_size);

struct LoadedSequence {
  TokenSequence seq;
  ModalityRegistry registry;
  uint16_t vocab_size{0};
};

LoadedSequence load_sequence(const std::filesystem::path& path);

}  // namespace psi
