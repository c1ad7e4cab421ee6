#pragma once

#include "psi/probes.hpp"
#include "psi/train.hpp"

namespace psi {

// Token-mixing continuation: how flow groups enter the training stream.
struct MixedDatasetSpec {
  double mix_ratio{0.5};  // fraction of sequences carrying flow groups
  FlowTokenSource flow_source{FlowTokenSource::ground_truth};
  double camera_fraction{0.5};

  void validate() const;  // mix_ratio in [0,1]; 0 degenerates to pure rgb
};

// Appends the flow pointer block to the registry (idempotent) and checks the
// vocabulary spans stay disjoint.
ModalityRegistry register_flow_modality(const ModalityRegistry& reg,
                                        const VocabLayout& vocab);

struct TokenizedFlow {
  Datum datum;
  bool saturated{false};
};

// One code per patch; invalid patches map to the unknown-flow code.
TokenizedFlow tokenize_flow(const Grid<Vec2>& u, const Grid<uint8_t>* valid,
                            const Codebook& flow_book,
                            const ModalityRegistry& reg, int step);

struct IntegrationResult {
  Checkpoint ckpt;
  std::vector<TrainLogPoint> curve;
};

// The third cycle step: extend the registry and embeddings with flow
// pointers, rebuild the sampler over mixed layouts, and continue training
// from a stable-phase checkpoint for extra_stable_steps plus a fresh decay.
// Throws PhaseError for non-stable checkpoints.
IntegrationResult continue_training(const Checkpoint& stable_ckpt,
                                    const WorldConfig& world,
                                    const Codebook& rgb_book,
                                    const Codebook& flow_book,
                                    const MixedDatasetSpec& spec,
                                    int extra_stable_steps, int decay_steps,
                                    const TrainOptions& opts,
                                    FlowExtractor extractor = nullptr);

bool is_flow_integrated(const Checkpoint& ckpt);

}  // namespace psi
