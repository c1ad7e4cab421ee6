#include "psi/predictor.hpp"

#include <algorithm>
#include <cmath>

#include "psi/stats.hpp"

namespace psi {

size_t sample_dist(const DistVec& dist, double temperature, int top_k,
                   Rng& rng) {
  if (dist.empty()) throw ShapeError("sample_dist: empty distribution");
  if (temperature < 0.0) throw ConfigError("temperature must be >= 0");

  if (temperature == 0.0) {
    size_t best = 0;
    for (size_t i = 1; i < dist.size(); ++i)
      if (dist[i] > dist[best]) best = i;
    return best;
  }

  std::vector<double> shaped(dist.size());
  for (size_t i = 0; i < dist.size(); ++i) {
    double p = std::max(dist[i], 0.0);
    shaped[i] = p > 0.0 ? std::pow(p, 1.0 / temperature) : 0.0;
  }
  if (top_k > 0 && static_cast<size_t>(top_k) < shaped.size()) {
    std::vector<size_t> idx(shaped.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::nth_element(idx.begin(), idx.begin() + top_k - 1, idx.end(),
                     [&](size_t a, size_t b) {
                       if (shaped[a] != shaped[b]) return shaped[a] > shaped[b];
                       return a < b;  // deterministic cutoff among ties
                     });
    std::vector<double> cut(shaped.size(), 0.0);
    for (int i = 0; i < top_k; ++i) cut[idx[i]] = shaped[idx[i]];
    shaped = std::move(cut);
  }
  double total = 0.0;
  for (double p : shaped) total += p;
  if (total <= 0.0) throw ZeroSupportError("distribution has no mass");
  double r = rng.uniform() * total;
  double acc = 0.0;
  for (size_t i = 0; i < shaped.size(); ++i) {
    acc += shaped[i];
    if (r < acc) return i;
  }
  for (size_t i = shaped.size(); i-- > 0;)
    if (shaped[i] > 0.0) return i;
  return shaped.size() - 1;
}

Datum sample_parallel(const Predictor& psi, const Datum& conditioning,
                      std::span<const Pointer> targets, double temperature,
                      int top_k, Rng& rng) {
  auto dists = psi.predict_parallel(conditioning, targets);
  Datum out;
  for (size_t i = 0; i < targets.size(); ++i)
    out.insert(targets[i],
               static_cast<Code>(sample_dist(dists[i], temperature, top_k, rng)));
  return out;
}

std::vector<double> entropy_of(const Predictor& psi, const Datum& conditioning,
                               std::span<const Pointer> queries) {
  auto dists = psi.predict_parallel(conditioning, queries);
  std::vector<double> h(dists.size());
  for (size_t i = 0; i < dists.size(); ++i) h[i] = shannon_entropy(dists[i]);
  return h;
}

std::vector<RevealStep> max_entropy_reveal(const Predictor& psi,
                                           Datum conditioning,
                                           std::span<const Pointer> queries,
                                           const Datum& truth, int steps) {
  std::vector<Pointer> remaining(queries.begin(), queries.end());
  for (const Pointer& q : remaining)
    if (!truth.contains(q))
      throw OrderingError("reveal query missing from the ground truth datum");

  std::vector<RevealStep> out;
  for (int s = 0; s < steps && !remaining.empty(); ++s) {
    auto h = entropy_of(psi, conditioning, remaining);
    size_t best = 0;
    for (size_t i = 1; i < h.size(); ++i)
      if (h[i] > h[best]) best = i;  // ties keep the first (ordered) pointer
    RevealStep step;
    step.pointer = remaining[best];
    step.entropy_before = h[best];
    step.revealed = truth.at(remaining[best]);
    conditioning.insert(step.pointer, step.revealed);
    remaining.erase(remaining.begin() + best);
    out.push_back(step);
  }
  return out;
}

}  // namespace psi
