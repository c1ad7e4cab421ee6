#include "psi/model_predictor.hpp"

#include <cmath>

#include "psi/train.hpp"

namespace psi {

ModelPredictor::ModelPredictor(const Checkpoint& ckpt)
    : model_(model_from_checkpoint(ckpt)), registry_(ckpt.registry) {
  if (model_.config().pointer_count != registry_.pointer_count())
    throw ConfigError("model pointer table does not match the registry");
}

LrasModel::Cache ModelPredictor::prefix_cache(const Datum& conditioning) const {
  LrasModel::Cache cache = model_.make_cache();
  if (conditioning.empty()) return cache;
  TokenSequence seq =
      serialize(conditioning, canonical_order(conditioning), registry_);
  const uint16_t vocab = model_.config().vocab;
  for (size_t i = 0; i < seq.items.size(); i += 2) {
    int ptr_row = static_cast<int>(vocab + seq.items[i]);
    model_.extend(cache, ptr_row);
    int aux = model_.config().fused_pointer_embedding ? ptr_row : -1;
    model_.extend(cache, static_cast<int>(seq.items[i + 1]), aux);
  }
  return cache;
}

DistVec ModelPredictor::logits_to_dist(const Eigen::VectorXf& logits) const {
  const int n = static_cast<int>(logits.size());
  float mx = logits.maxCoeff();
  DistVec dist(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double e = std::exp(static_cast<double>(logits(i) - mx));
    dist[i] = e;
    total += e;
  }
  for (double& d : dist) d /= total;
  return dist;
}

std::vector<DistVec> ModelPredictor::predict_parallel(
    const Datum& conditioning, std::span<const Pointer> queries) const {
  LrasModel::Cache cache = prefix_cache(conditioning);
  const uint16_t vocab = model_.config().vocab;
  std::vector<DistVec> out;
  out.reserve(queries.size());
  for (const Pointer& q : queries) {
    int ptr_row = static_cast<int>(vocab + registry_.id_of(q));
    out.push_back(logits_to_dist(model_.peek(cache, ptr_row)));
  }
  return out;
}

Datum ModelPredictor::sample_sequential(const Datum& conditioning,
                                        std::span<const Pointer> targets,
                                        double temperature, int top_k,
                                        Rng& rng) const {
  LrasModel::Cache cache = prefix_cache(conditioning);
  const uint16_t vocab = model_.config().vocab;
  Datum out;
  for (const Pointer& t : targets) {
    if (conditioning.contains(t) || out.contains(t))
      throw OrderingError("sequential target already has a value");
    int ptr_row = static_cast<int>(vocab + registry_.id_of(t));
    DistVec dist = logits_to_dist(model_.extend(cache, ptr_row));
    Code c = static_cast<Code>(sample_dist(dist, temperature, top_k, rng));
    int aux = model_.config().fused_pointer_embedding ? ptr_row : -1;
    model_.extend(cache, static_cast<int>(c), aux);
    out.insert(t, c);
  }
  return out;
}

DistVec ModelPredictor::next_value_dist(const TokenSequence& prefix) const {
  if (!prefix.has_trailing_pointer())
    throw MalformedSequenceError("prefix must end in a lone pointer");
  // Validates ids/codes and ordering invariants before any model work.
  deserialize(prefix, registry_, model_.config().vocab);
  LrasModel::Cache cache = model_.make_cache();
  const uint16_t vocab = model_.config().vocab;
  Eigen::VectorXf logits;
  for (size_t i = 0; i < prefix.items.size(); ++i) {
    bool is_pointer = i % 2 == 0;
    if (is_pointer) {
      logits = model_.extend(cache,
                             static_cast<int>(vocab + prefix.items[i]));
    } else {
      int aux = model_.config().fused_pointer_embedding
                    ? static_cast<int>(vocab + prefix.items[i - 1])
                    : -1;
      model_.extend(cache, static_cast<int>(prefix.items[i]), aux);
    }
  }
  return logits_to_dist(logits);
}

}  // namespace psi
