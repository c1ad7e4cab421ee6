#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "psi/geometry.hpp"
#include "psi/image.hpp"
#include "psi/pointer.hpp"
#include "psi/registry.hpp"
#include "psi/rng.hpp"

namespace psi {

// One k-means table. Codes are global vocabulary indices inside `span`;
// index i of the table maps to code span.offset + i.
struct LevelTable {
  VocabSpan span;
  int dim{0};
  int size{0};                   // centroids actually fitted, <= span.size
  std::vector<float> centroids;  // size * dim, row-major

  std::span<const float> centroid(int i) const {
    return {centroids.data() + static_cast<size_t>(i) * dim,
            static_cast<size_t>(dim)};
  }
  // Nearest centroid by squared L2; ties resolve to the lowest index.
  int nearest(std::span<const float> v) const;

  bool operator==(const LevelTable&) const = default;
};

// Hierarchical residual quantizer for one modality. Level 0 encodes a
// 2x-downsampled patch; each finer level encodes the residual of the
// reconstruction so far at full patch resolution. Encoding touches only the
// pixels of its own patch.
class Codebook {
public:
  Codebook() = default;
  Codebook(Modality modality, int patch_size, std::vector<LevelTable> levels);

  Modality modality() const { return modality_; }
  int patch_size() const { return patch_size_; }
  int depth() const { return static_cast<int>(levels_.size()); }
  const LevelTable& level(int l) const { return levels_.at(l); }

  // patch: p*p*3 floats in [0,255] -> `depth` codes, coarse to fine.
  std::vector<Code> encode_patch(std::span<const float> patch) const;
  // First `prefix` levels of a code stack -> reconstructed patch, clamped.
  std::vector<float> decode_patch(std::span<const Code> codes, int prefix) const;
  std::vector<float> decode_patch(std::span<const Code> codes) const {
    return decode_patch(codes, static_cast<int>(codes.size()));
  }

  void save(const std::filesystem::path& path) const;
  static Codebook load(const std::filesystem::path& path);

  bool operator==(const Codebook&) const = default;

private:
  Modality modality_{Modality::rgb};
  int patch_size_{0};
  std::vector<LevelTable> levels_;
};

// 2x average pooling of a p*p*3 patch vector; p must be even or 1.
std::vector<float> downsample2(std::span<const float> patch, int patch_size);
// Nearest-neighbor upsample back to p*p*3.
std::vector<float> upsample2(std::span<const float> coarse, int patch_size);

struct KMeansResult {
  std::vector<float> centroids;
  int size{0};
};

// Seeded k-means++ then Lloyd iterations. If the sample has at most k
// distinct points the centroids are exactly those points (sorted, then
// padded by repeating the last), which makes encoding lossless.
KMeansResult kmeans(std::span<const float> samples, int dim, int k,
                    int iters, Rng& rng);

// Fits the rgb hierarchy from per-patch samples (each p*p*3 floats).
// Requires at least 10 samples per fitted centroid at level 0 is not
// demanded; the guard is a minimum total sample count.
Codebook fit_rgb_codebook(std::span<const float> patches, int patch_size,
                          int depth, const VocabLayout& vocab, Rng& rng);

// Scalar flow codebook over 2-d displacement vectors. The final span slot is
// reserved for the unknown-flow code and never fitted.
Codebook fit_flow_codebook(std::span<const Vec2> flows,
                           const VocabLayout& vocab, Rng& rng);

struct FlowEncodeResult {
  Code code{0};
  bool saturated{false};  // input outside the hull of fitted centroids
};

FlowEncodeResult encode_flow(const Codebook& flow_book, Vec2 v);
// Decoded displacement, rounded to integer pixels.
Vec2 decode_flow(const Codebook& flow_book, Code c);
bool is_unknown_flow(const Codebook& flow_book, Code c);

// Whole-frame helpers; patch-major, levels ascending inside a patch.
std::vector<Code> encode_frame(const Codebook& book, const RgbImage& frame);
RgbImage decode_frame(const Codebook& book, std::span<const Code> codes,
                      int width, int height);

}  // namespace psi
