#pragma once

#include "psi/checkpoint.hpp"
#include "psi/model.hpp"
#include "psi/predictor.hpp"

namespace psi {

// Trained-network implementation of the predictive interface. Conditioning
// datums are serialized in canonical order, the prefix is run once, and each
// query costs one incremental position.
class ModelPredictor final : public Predictor {
public:
  explicit ModelPredictor(const Checkpoint& ckpt);

  uint16_t vocab_size() const override { return model_.config().vocab; }

  std::vector<DistVec> predict_parallel(
      const Datum& conditioning,
      std::span<const Pointer> queries) const override;

  Datum sample_sequential(const Datum& conditioning,
                          std::span<const Pointer> targets, double temperature,
                          int top_k, Rng& rng) const override;

  // Value distribution after an explicit prefix ending in a lone pointer;
  // used for order-consistency checks.
  DistVec next_value_dist(const TokenSequence& prefix) const;

  const ModalityRegistry& registry() const { return registry_; }
  const LrasModel& model() const { return model_; }

private:
  LrasModel::Cache prefix_cache(const Datum& conditioning) const;
  DistVec logits_to_dist(const Eigen::VectorXf& logits) const;

  LrasModel model_;
  ModalityRegistry registry_;
};

}  // namespace psi
