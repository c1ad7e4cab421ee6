#pragma once

#include <optional>
#include <span>

#include "psi/predictor.hpp"
#include "psi/quantizer.hpp"
#include "psi/registry.hpp"
#include "psi/world.hpp"

namespace psi {

struct PatchIx {
  int row{0};
  int col{0};
  auto operator<=>(const PatchIx&) const = default;
};

// Everything a probe needs besides the predictor: token plumbing and the
// world's geometric conventions. Probes never look at world latents, only at
// images and the predictor.
struct ProbeContext {
  const Predictor* psi{nullptr};
  const ModalityRegistry* registry{nullptr};
  const VocabLayout* vocab{nullptr};
  const Codebook* rgb_book{nullptr};
  const Codebook* flow_book{nullptr};  // null before flow integration
  const std::vector<Rgb>* palette{nullptr};
  int patch_size{0};
  int grid_size{0};
  int parallax_k{4};

  int patches_per_side() const { return grid_size / patch_size; }
  bool has_flow() const;
};

ProbeContext make_probe_context(const Predictor& psi,
                                const ModalityRegistry& reg,
                                const VocabLayout& vocab,
                                const Codebook& rgb_book,
                                const Codebook* flow_book,
                                const WorldConfig& world);

// Full-frame rgb datum of a palette-index frame.
Datum frame_datum(const ProbeContext& ctx, const Image& frame,
                  int frame_index);

struct BumpSpec {
  int size{1};       // tracer dot edge length in pixels (1 or 2)
  bool enabled{true};
};

// Paints a tracer dot at the center of patch (row, col); pixels outside the
// patch are never touched.
Image perturb_patch(const Image& frame, PatchIx patch, int patch_size,
                    const BumpSpec& bump = {});

struct FlowProbeResult {
  Grid<Vec2> u;            // pixel units, patch grid; valid entries only
  Grid<uint8_t> valid;
  Grid<double> peak_kl;    // KL mass at the winning patch
  bool degenerate{false};
};

struct KlTraceOptions {
  double reveal_fraction{0.25};
  int n_repeats{4};
  int from_frame{0};
  int to_frame{1};
  BumpSpec bump{};
};

// Flow by KL tracing: perturb source patch i, predict target-frame level-0
// codes conditioned on (perturbed f0, revealed subset R of f1), and take
// u_i = argmax_{j not in R} KL(perturbed || clean) - i, averaged over
// n_repeats draws of R.
FlowProbeResult kl_trace_flow(const ProbeContext& ctx, const Image& f0,
                              const Image& f1,
                              std::span<const PatchIx> probe_patches,
                              const KlTraceOptions& opts, Rng& rng);

struct BlockMatchResult {
  Grid<Vec2> u;
  Grid<uint8_t> valid;  // 0 when the SSD argmin is not unique
};

// Per-patch SSD matching of f0 patches inside f1 within `radius` pixels.
// Ties prefer smaller |u|^2, then lexicographic (x, then y); any tie in the
// minimal SSD clears the valid flag.
BlockMatchResult block_match_flow(const RgbImage& f0, const RgbImage& f1,
                                  int patch_size, int radius);

enum class PromptMode { patch_copy, sparse_flow };

struct MotionPrompt {
  PatchIx patch;     // source patch
  Vec2 shift_px;     // commanded displacement, patch-aligned for patch_copy
  PromptMode mode{PromptMode::patch_copy};
};

struct HypotheticalSample {
  Datum f1_tokens;
  RgbImage f1_image;
};

// Samples a hypothetical next frame under a motion prompt. patch_copy seeds
// the target-frame patch at +shift with the source patch's codes; sparse_flow
// seeds the source patch's flow token (requires a flow-capable predictor).
HypotheticalSample motion_hypothetical(const ProbeContext& ctx,
                                       const Image& f0,
                                       const MotionPrompt& prompt,
                                       double temperature, Rng& rng);

struct SegmentResult {
  Grid<uint8_t> patch_mask;  // patch-grid membership
  Image pixel_mask;          // 0/1, pixel resolution
  PatchIx seed;
  Grid<int> votes;
  int votes_needed{0};
  bool degenerate{false};    // empty mask
};

struct SegmentOptions {
  int n_samples{5};
  double temperature{1.0};
  PromptMode mode{PromptMode::patch_copy};
  std::vector<Vec2> shifts;  // commanded displacements, cycled over samples
};

// Object mask by motion hypotheticals: command the seed patch to move, block
// match each sampled frame against f0, and keep patches whose flow tracks
// the command in a majority of samples.
SegmentResult segment_from_hypotheticals(const ProbeContext& ctx,
                                         const Image& f0, Vec2 seed_px,
                                         const SegmentOptions& opts, Rng& rng);

struct DepthResult {
  Grid<double> z;
  Grid<uint8_t> valid;
  bool degenerate{false};
};

struct DepthOptions {
  int baseline{1};
  int n_samples{2};
  double temperature{1.0};
  int block_match_radius{4};
};

// Depth by viewpoint hypotheticals: condition on camera shifts of +-baseline
// along each axis, sample the shifted view, block match for disparity d and
// average z = baseline * k / d over samples and axes. d = 0 patches are
// masked; throws ProbeFailureError if every patch masks out.
DepthResult depth_from_viewpoint(const ProbeContext& ctx, const Image& f0,
                                 const DepthOptions& opts, Rng& rng);

// ---- flow-token ops (require an integrated predictor) ----

enum class SampleMode { sequential, parallel };

struct PredictFlowOptions {
  SampleMode mode{SampleMode::sequential};
  double temperature{1.0};
  std::optional<Vec2> camera;  // camera-conditioned variant
  int step{0};
};

// Samples the flow-token group given f0 (and optionally camera tokens) and
// decodes it; unknown-flow codes are flagged invalid.
FlowProbeResult predict_flow(const ProbeContext& ctx, const Image& f0,
                             const PredictFlowOptions& opts, Rng& rng);

struct SparseFlowCommand {
  std::vector<std::pair<PatchIx, Vec2>> pins;
};

// Conditions on pinned flow tokens, samples the remaining flow group then the
// next frame (sequential).
HypotheticalSample generate_with_sparse_flow(const ProbeContext& ctx,
                                             const Image& f0,
                                             const SparseFlowCommand& cmd,
                                             double rgb_temperature, Rng& rng);

struct PMotionResult {
  Grid<double> p;
  bool eps_warning{false};  // eps below codebook resolution
};

// Per-patch probability mass of flow codes with |decoded v| > eps_px.
PMotionResult p_motion_map(const ProbeContext& ctx, const Image& f0,
                           double eps_px);

Grid<Vec2d> expected_displacement(const ProbeContext& ctx, const Image& f0);

// Mean motion probability over B's patches when A's patches are pinned to the
// commanded flow. Masks must be non-empty and disjoint.
double dependency_score(const ProbeContext& ctx, const Image& f0,
                        std::span<const PatchIx> mask_a,
                        std::span<const PatchIx> mask_b, Vec2 shift,
                        double eps_px);

}  // namespace psi
