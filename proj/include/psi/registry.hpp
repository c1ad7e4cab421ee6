#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "psi/pointer.hpp"

namespace psi {

struct VocabSpan {
  uint16_t offset{0};
  uint16_t size{0};
  bool operator==(const VocabSpan&) const = default;
  bool contains(Code c) const { return c >= offset && c < offset + size; }
};

// Static carve-up of the shared value vocabulary. All modalities and quantizer
// levels draw codes from disjoint spans of one vocabulary of `vocab_size`
// entries, so a code is globally unambiguous.
struct VocabLayout {
  uint16_t vocab_size{512};
  std::vector<VocabSpan> rgb_levels;  // one span per hierarchy level
  VocabSpan camera;                   // 2*camera_max_shift+1 codes
  VocabSpan flow;                     // last slot is the unknown-flow code
  int camera_max_shift{4};

  static VocabLayout standard();

  Code camera_code(int shift) const;
  int camera_shift(Code c) const;
  Code unknown_flow_code() const {
    return static_cast<Code>(flow.offset + flow.size - 1);
  }
  uint16_t flow_table_size() const { return static_cast<uint16_t>(flow.size - 1); }

  // Throws VocabularyError on overlapping spans or spans past vocab_size.
  void validate() const;

  bool operator==(const VocabLayout&) const = default;
};

void to_json(nlohmann::json& j, const VocabLayout& v);
void from_json(const nlohmann::json& j, VocabLayout& v);

struct RegistryShape {
  int frames{2};
  int rows{4};
  int cols{4};
  int rgb_depth{4};
  bool operator==(const RegistryShape&) const = default;
};

// Maps pointers to dense integer ids. Modalities occupy contiguous id blocks
// in registration order, so registering a new modality appends a block and
// never renumbers existing pointers.
class ModalityRegistry {
public:
  ModalityRegistry() = default;
  explicit ModalityRegistry(const RegistryShape& shape);

  void register_camera();
  void register_flow();  // idempotent

  bool has_camera() const;
  bool has_flow() const;

  int frames() const { return shape_.frames; }
  int steps() const { return shape_.frames - 1; }
  int rows() const { return shape_.rows; }
  int cols() const { return shape_.cols; }
  int rgb_depth() const { return shape_.rgb_depth; }
  const RegistryShape& shape() const { return shape_; }

  uint32_t pointer_count() const;
  uint32_t id_of(const Pointer& p) const;
  Pointer pointer_of(uint32_t id) const;

  // Canonical enumerations: row-major patches, levels ascending.
  std::vector<Pointer> rgb_frame_pointers(int frame) const;
  std::vector<Pointer> rgb_patch_pointers(int frame, int row, int col) const;
  std::vector<Pointer> camera_step_pointers(int step) const;
  std::vector<Pointer> flow_step_pointers(int step) const;

  // Ids of every rgb pointer in canonical order; used to check id stability
  // across modality registrations.
  std::vector<uint32_t> rgb_id_table() const;

  bool operator==(const ModalityRegistry&) const = default;

  friend void to_json(nlohmann::json& j, const ModalityRegistry& r);
  friend void from_json(const nlohmann::json& j, ModalityRegistry& r);

private:
  uint32_t block_size(Modality m) const;
  std::optional<uint32_t> block_offset(Modality m) const;

  RegistryShape shape_{};
  std::vector<Modality> blocks_{Modality::rgb};
};

}  // namespace psi
