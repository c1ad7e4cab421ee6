#pragma once

#include <span>
#include <vector>

#include "psi/pointer.hpp"
#include "psi/rng.hpp"

namespace psi {

using DistVec = std::vector<double>;  // one probability per vocabulary code

// Random-access predictive interface: everything downstream of training
// (probes, entropy maps, structure extraction) is written against this, so an
// exact enumerator and a trained network are interchangeable.
class Predictor {
public:
  virtual ~Predictor() = default;

  virtual uint16_t vocab_size() const = 0;

  // Marginal distribution of each query pointer conditioned on `conditioning`
  // only. Queries do not condition on each other.
  virtual std::vector<DistVec> predict_parallel(
      const Datum& conditioning, std::span<const Pointer> queries) const = 0;

  // Chain-rule sampling of `targets` in the given order; each draw conditions
  // on the conditioning set plus previously sampled targets. temperature 0
  // means argmax; top_k 0 means the full vocabulary.
  virtual Datum sample_sequential(const Datum& conditioning,
                                  std::span<const Pointer> targets,
                                  double temperature, int top_k,
                                  Rng& rng) const = 0;
};

// Independent per-pointer draws from predict_parallel marginals.
Datum sample_parallel(const Predictor& psi, const Datum& conditioning,
                      std::span<const Pointer> targets, double temperature,
                      int top_k, Rng& rng);

// Draws one index from a distribution after temperature and top-k shaping.
size_t sample_dist(const DistVec& dist, double temperature, int top_k,
                   Rng& rng);

// Per-pointer entropy (nats) of predict_parallel marginals.
std::vector<double> entropy_of(const Predictor& psi, const Datum& conditioning,
                               std::span<const Pointer> queries);

struct RevealStep {
  Pointer pointer;
  double entropy_before{0.0};
  Code revealed{0};
};

// Greedy max-entropy revelation: repeatedly reveal the unrevealed query with
// the highest marginal entropy, taking values from `truth`.
std::vector<RevealStep> max_entropy_reveal(const Predictor& psi,
                                           Datum conditioning,
                                           std::span<const Pointer> queries,
                                           const Datum& truth, int steps);

}  // namespace psi
