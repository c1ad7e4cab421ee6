#pragma once

#include <functional>
#include <optional>

#include "psi/quantizer.hpp"
#include "psi/registry.hpp"
#include "psi/sequence.hpp"
#include "psi/world.hpp"

namespace psi {

// Per-episode token grids: rgb codes patch-major (levels ascending inside a
// patch), camera codes per step (x, y), flow codes per step patch-major.
struct EpisodeTokens {
  std::vector<std::vector<Code>> rgb;
  std::vector<std::array<Code, 2>> camera;
  std::vector<std::vector<Code>> flow;
};

EpisodeTokens tokenize_episode(const Episode& ep, const Codebook& rgb_book,
                               const Codebook* flow_book,
                               const VocabLayout& vocab);

Datum rgb_frame_datum(const EpisodeTokens& t, const ModalityRegistry& reg,
                      int frame);
Datum camera_step_datum(const EpisodeTokens& t, const ModalityRegistry& reg,
                        int step);
Datum flow_step_datum(const EpisodeTokens& t, const ModalityRegistry& reg,
                      int step);

Datum encode_frame_datum(const RgbImage& frame, const Codebook& rgb_book,
                         const ModalityRegistry& reg, int frame_index);

enum class FlowTokenSource { ground_truth, extracted };

// Training stream description. Sequences interleave groups in causal order
// f0, [camera0], [flow0], f1, ...; camera and flow groups are present
// independently with the given fractions; group-internal order is random.
struct DatasetSpec {
  WorldConfig world;
  double camera_fraction{0.5};
  bool include_flow{false};
  double flow_fraction{0.5};  // fraction of sequences carrying flow groups
  FlowTokenSource flow_source{FlowTokenSource::ground_truth};
};

using SequenceSampler = std::function<TokenSequence(Rng&)>;

// Probe-extracted flow hook: maps (episode, step) to a patch flow field with
// validity; invalid patches tokenize to the unknown-flow code.
struct ExtractedFlow {
  Grid<Vec2> u;
  Grid<uint8_t> valid;
};
using FlowExtractor = std::function<ExtractedFlow(const Episode&, int step, Rng&)>;

SequenceSampler make_sampler(const DatasetSpec& spec, const Codebook& rgb_book,
                             const Codebook* flow_book,
                             const ModalityRegistry& reg,
                             const VocabLayout& vocab,
                             FlowExtractor extractor = nullptr);

// Collects patch samples for codebook fitting from `n_episodes` episodes.
struct FitSamples {
  std::vector<float> rgb_patches;  // concatenated p*p*3 vectors
  std::vector<Vec2> flows;         // patch flows
};

FitSamples collect_fit_samples(const WorldConfig& cfg, int n_episodes,
                               uint64_t seed);

}  // namespace psi
