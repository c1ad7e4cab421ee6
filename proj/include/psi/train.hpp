#pragma once

#include <optional>

#include "psi/checkpoint.hpp"
#include "psi/dataset.hpp"
#include "psi/model.hpp"

namespace psi {

struct TrainOptions {
  int batch{8};
  int threads{4};
  float weight_decay{0.01f};
  float clip_norm{1.0f};
  float beta1{0.9f};
  float beta2{0.95f};
  float adam_eps{1e-8f};
  int log_every{10};
};

struct TrainResult {
  Checkpoint final_ckpt;
  std::optional<Checkpoint> stable_ckpt;  // snapshot at warmup+stable
  std::vector<TrainLogPoint> curve;       // one point per step
};

// Metadata copied into emitted checkpoints.
struct RunMeta {
  ModalityRegistry registry;
  VocabLayout vocab;
  double camera_fraction{0.0};
  nlohmann::json extra;
};

// Full WSD run from scratch. Deterministic in (configs, data_seed, init seed
// = data_seed): same inputs give bit-identical curves and checkpoints.
// Batch items are processed in parallel but gradients are reduced in index
// order, so results do not depend on thread count.
TrainResult train_model(const ModelConfig& mcfg, const WsdSchedule& schedule,
                        const SequenceSampler& sampler,
                        const TrainOptions& opts, uint64_t data_seed,
                        const RunMeta& meta);

// Continues `start` to the end of `schedule`. The schedule must agree with
// the checkpoint's history up to its step (same warmup/peak; stable phase may
// be extended; decay replaced). Resuming a run from its stable checkpoint
// reproduces the uninterrupted run bit for bit.
TrainResult resume_training(const Checkpoint& start,
                            const WsdSchedule& schedule,
                            const SequenceSampler& sampler,
                            const TrainOptions& opts);

LrasModel model_from_checkpoint(const Checkpoint& ckpt);

// Mean per-token validation loss over n freshly drawn sequences.
double eval_mean_loss(const Checkpoint& ckpt, const SequenceSampler& sampler,
                      int n, uint64_t seed);

}  // namespace psi
