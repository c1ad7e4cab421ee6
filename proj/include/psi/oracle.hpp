#pragma once

#include <memory>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

#include "psi/predictor.hpp"
#include "psi/quantizer.hpp"
#include "psi/registry.hpp"
#include "psi/world.hpp"

namespace psi {

// One fully realized trajectory consistent with the prior: initial state plus
// per-step choices, with its prior weight. Token values are derived lazily.
struct WorldTrace {
  double weight{1.0};
  std::vector<WorldState> states;
  std::vector<Vec2> shifts;
  std::vector<RenderResult> renders;
  std::vector<Grid<Vec2>> patch_flows;
};

struct OracleSupport {
  std::vector<WorldTrace> worlds;
  double total_weight{0.0};
};

// Exact posterior by enumeration: every latent branch of the world prior is
// expanded (within enumeration_cap), filtered for consistency with the
// conditioning datum, and marginalized in code space. Tracer paint found in a
// fully revealed first frame is treated as an intervention attached to the
// surface beneath it, so its placement never reweights the posterior.
class OracleWorldModel final : public Predictor {
public:
  OracleWorldModel(WorldConfig cfg, ModalityRegistry registry,
                   VocabLayout vocab, Codebook rgb_book,
                   std::optional<Codebook> flow_book = std::nullopt);

  uint16_t vocab_size() const override { return vocab_.vocab_size; }

  std::vector<DistVec> predict_parallel(
      const Datum& conditioning,
      std::span<const Pointer> queries) const override;

  Datum sample_sequential(const Datum& conditioning,
                          std::span<const Pointer> targets, double temperature,
                          int top_k, Rng& rng) const override;

  // Posterior support for a conditioning set; cached per datum. Throws
  // ZeroSupportError when nothing in the prior explains the datum and
  // CapExceededError when the branch count would exceed enumeration_cap.
  std::shared_ptr<const OracleSupport> support_for(const Datum& datum) const;

  // Number of latent branches before conditioning (cap arithmetic).
  double prior_branch_count() const;

  // Token value of one pointer under a fixed trace.
  Code token_of(const WorldTrace& trace, const Pointer& p) const;

  // Exact posterior probability of `assignment` given `conditioning`.
  double log_prob(const Datum& conditioning, const Datum& assignment) const;

  const ModalityRegistry& registry() const { return registry_; }
  const VocabLayout& vocab() const { return vocab_; }
  const Codebook& rgb_book() const { return rgb_book_; }
  const Codebook* flow_book() const {
    return flow_book_ ? &*flow_book_ : nullptr;
  }
  const WorldConfig& config() const { return cfg_; }

  void clear_cache() const;

private:
  struct TokenMemo;

  std::shared_ptr<const OracleSupport> enumerate(const Datum& datum) const;

  WorldConfig cfg_;
  ModalityRegistry registry_;
  VocabLayout vocab_;
  Codebook rgb_book_;
  std::optional<Codebook> flow_book_;

  mutable std::shared_mutex cache_mutex_;
  mutable std::unordered_map<std::string,
                             std::shared_ptr<const OracleSupport>>
      cache_;
  mutable std::shared_ptr<TokenMemo> memo_;
};

}  // namespace psi
