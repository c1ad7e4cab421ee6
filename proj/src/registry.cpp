#include "psi/registry.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "psi/error.hpp"

namespace psi {

VocabLayout VocabLayout::standard() {
  VocabLayout v;
  v.vocab_size = 512;
  // Four rgb hierarchy levels packed from 0, then camera, then flow; the
  // remainder of the vocabulary is spare.
  v.rgb_levels = {{0, 128}, {128, 64}, {192, 64}, {256, 64}};
  v.camera = {320, 9};
  v.camera_max_shift = 4;
  v.flow = {329, 32};
  v.validate();
  return v;
}

Code VocabLayout::camera_code(int shift) const {
  if (shift < -camera_max_shift || shift > camera_max_shift)
    throw VocabularyError("camera shift " + std::to_string(shift) +
                          " outside quantized range");
  return static_cast<Code>(camera.offset + shift + camera_max_shift);
}

int VocabLayout::camera_shift(Code c) const {
  if (!camera.contains(c))
    throw VocabularyError("code " + std::to_string(c) + " not a camera code");
  return static_cast<int>(c) - camera.offset - camera_max_shift;
}

void VocabLayout::validate() const {
  std::vector<VocabSpan> spans = rgb_levels;
  spans.push_back(camera);
  spans.push_back(flow);
  for (const auto& s : spans) {
    if (s.size == 0) throw VocabularyError("empty vocabulary span");
    if (s.offset + s.size > vocab_size)
      throw VocabularyError("vocabulary span past vocab_size");
  }
  for (size_t i = 0; i < spans.size(); ++i)
    for (size_t j = i + 1; j < spans.size(); ++j) {
      const auto &a = spans[i], &b = spans[j];
      if (a.offset < b.offset + b.size && b.offset < a.offset + a.size)
        throw VocabularyError("overlapping vocabulary spans");
    }
  if (camera.size != 2 * camera_max_shift + 1)
    throw VocabularyError("camera span size inconsistent with max shift");
}

void to_json(nlohmann::json& j, const VocabLayout& v) {
  j = nlohmann::json::object();
  j["vocab_size"] = v.vocab_size;
  j["camera_max_shift"] = v.camera_max_shift;
  auto span = [](const VocabSpan& s) {
    return nlohmann::json{{"offset", s.offset}, {"size", s.size}};
  };
  j["camera"] = span(v.camera);
  j["flow"] = span(v.flow);
  j["rgb_levels"] = nlohmann::json::array();
  for (const auto& s : v.rgb_levels) j["rgb_levels"].push_back(span(s));
}

void from_json(const nlohmann::json& j, VocabLayout& v) {
  auto span = [](const nlohmann::json& s) {
    return VocabSpan{s.at("offset").get<uint16_t>(),
                     s.at("size").get<uint16_t>()};
  };
  v.vocab_size = j.at("vocab_size").get<uint16_t>();
  v.camera_max_shift = j.at("camera_max_shift").get<int>();
  v.camera = span(j.at("camera"));
  v.flow = span(j.at("flow"));
  v.rgb_levels.clear();
  for (const auto& s : j.at("rgb_levels")) v.rgb_levels.push_back(span(s));
  v.validate();
}

ModalityRegistry::ModalityRegistry(const RegistryShape& shape) : shape_(shape) {
  if (shape.frames < 2 || shape.frames > 4)
    throw ConfigError("registry frames must be 2..4");
  if (shape.rows <= 0 || shape.cols <= 0 || shape.rgb_depth < 1 ||
      shape.rgb_depth > 4)
    throw ConfigError("bad registry shape");
}

void ModalityRegistry::register_camera() {
  if (has_camera()) throw ConfigError("camera modality already registered");
  blocks_.push_back(Modality::camera);
}

void ModalityRegistry::register_flow() {
  if (has_flow()) return;  // idempotent: integration may run twice
  blocks_.push_back(Modality::flow);
}

bool ModalityRegistry::has_camera() const {
  return std::find(blocks_.begin(), blocks_.end(), Modality::camera) !=
         blocks_.end();
}

bool ModalityRegistry::has_flow() const {
  return std::find(blocks_.begin(), blocks_.end(), Modality::flow) !=
         blocks_.end();
}

uint32_t ModalityRegistry::block_size(Modality m) const {
  const uint32_t patches = static_cast<uint32_t>(shape_.rows) * shape_.cols;
  switch (m) {
    case Modality::rgb:
      return static_cast<uint32_t>(shape_.frames) * patches * shape_.rgb_depth;
    case Modality::camera:
      return static_cast<uint32_t>(steps()) * 2;
    case Modality::flow:
      return static_cast<uint32_t>(steps()) * patches;
  }
  return 0;
}

std::optional<uint32_t> ModalityRegistry::block_offset(Modality m) const {
  uint32_t off = 0;
  for (Modality b : blocks_) {
    if (b == m) return off;
    off += block_size(b);
  }
  return std::nullopt;
}

uint32_t ModalityRegistry::pointer_count() const {
  uint32_t n = 0;
  for (Modality b : blocks_) n += block_size(b);
  return n;
}

uint32_t ModalityRegistry::id_of(const Pointer& p) const {
  auto off = block_offset(p.modality);
  if (!off)
    throw VocabularyError("modality not registered: " + to_string(p.modality));
  const int patches_row = shape_.rows, patches_col = shape_.cols;
  switch (p.modality) {
    case Modality::rgb: {
      if (p.frame >= shape_.frames || p.row >= patches_row ||
          p.col >= patches_col || p.level >= shape_.rgb_depth)
        throw VocabularyError("rgb pointer out of range: " + p.to_string());
      uint32_t ix = ((static_cast<uint32_t>(p.frame) * patches_row + p.row) *
                         patches_col +
                     p.col) *
                        shape_.rgb_depth +
                    p.level;
      return *off + ix;
    }
    case Modality::camera: {
      if (p.frame >= steps() || p.row >= 2 || p.col != 0 || p.level != 0)
        throw VocabularyError("camera pointer out of range: " + p.to_string());
      return *off + static_cast<uint32_t>(p.frame) * 2 + p.row;
    }
    case Modality::flow: {
      if (p.frame >= steps() || p.row >= patches_row || p.col >= patches_col ||
          p.level != 0)
        throw VocabularyError("flow pointer out of range: " + p.to_string());
      return *off + (static_cast<uint32_t>(p.frame) * patches_row + p.row) *
                        patches_col +
             p.col;
    }
  }
  throw VocabularyError("bad modality");
}

Pointer ModalityRegistry::pointer_of(uint32_t id) const {
  uint32_t off = 0;
  for (Modality b : blocks_) {
    uint32_t size = block_size(b);
    if (id < off + size) {
      uint32_t ix = id - off;
      switch (b) {
        case Modality::rgb: {
          uint32_t level = ix % shape_.rgb_depth;
          ix /= shape_.rgb_depth;
          uint32_t col = ix % shape_.cols;
          ix /= shape_.cols;
          uint32_t row = ix % shape_.rows;
          uint32_t frame = ix / shape_.rows;
          return Pointer::rgb(frame, row, col, level);
        }
        case Modality::camera:
          return Pointer::camera(ix / 2, ix % 2);
        case Modality::flow: {
          uint32_t col = ix % shape_.cols;
          ix /= shape_.cols;
          return Pointer::flow(ix / shape_.rows, ix % shape_.rows, col);
        }
      }
    }
    off += size;
  }
  throw VocabularyError("pointer id out of range: " + std::to_string(id));
}

std::vector<Pointer> ModalityRegistry::rgb_frame_pointers(int frame) const {
  std::vector<Pointer> out;
  out.reserve(static_cast<size_t>(shape_.rows) * shape_.cols *
              shape_.rgb_depth);
  for (int r = 0; r < shape_.rows; ++r)
    for (int c = 0; c < shape_.cols; ++c)
      for (int l = 0; l < shape_.rgb_depth; ++l)
        out.push_back(Pointer::rgb(frame, r, c, l));
  return out;
}

std::vector<Pointer> ModalityRegistry::rgb_patch_pointers(int frame, int row,
                                                          int col) const {
  std::vector<Pointer> out;
  for (int l = 0; l < shape_.rgb_depth; ++l)
    out.push_back(Pointer::rgb(frame, row, col, l));
  return out;
}

std::vector<Pointer> ModalityRegistry::camera_step_pointers(int step) const {
  return {Pointer::camera(step, 0), Pointer::camera(step, 1)};
}

std::vector<Pointer> ModalityRegistry::flow_step_pointers(int step) const {
  std::vector<Pointer> out;
  out.reserve(static_cast<size_t>(shape_.rows) * shape_.cols);
  for (int r = 0; r < shape_.rows; ++r)
    for (int c = 0; c < shape_.cols; ++c)
      out.push_back(Pointer::flow(step, r, c));
  return out;
}

std::vector<uint32_t> ModalityRegistry::rgb_id_table() const {
  std::vector<uint32_t> out;
  for (int f = 0; f < shape_.frames; ++f)
    for (const Pointer& p : rgb_frame_pointers(f)) out.push_back(id_of(p));
  return out;
}

void to_json(nlohmann::json& j, const ModalityRegistry& r) {
  j = nlohmann::json::object();
  j["frames"] = r.shape_.frames;
  j["rows"] = r.shape_.rows;
  j["cols"] = r.shape_.cols;
  j["rgb_depth"] = r.shape_.rgb_depth;
  j["blocks"] = nlohmann::json::array();
  for (Modality b : r.blocks_) j["blocks"].push_back(to_string(b));
}

void from_json(const nlohmann::json& j, ModalityRegistry& r) {
  RegistryShape shape;
  shape.frames = j.at("frames").get<int>();
  shape.rows = j.at("rows").get<int>();
  shape.cols = j.at("cols").get<int>();
  shape.rgb_depth = j.at("rgb_depth").get<int>();
  r = ModalityRegistry(shape);
  r.blocks_.clear();
  for (const auto& b : j.at("blocks")) {
    std::string s = b.get<std::string>();
    if (s == "rgb")
      r.blocks_.push_back(Modality::rgb);
    else if (s == "camera")
      r.blocks_.push_back(Modality::camera);
    else if (s == "flow")
      r.blocks_.push_back(Modality::flow);
    else
      throw VocabularyError("unknown modality block: " + s);
  }
}

}  // namespace psi
