#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "psi/rng.hpp"
#include "psi/sequence.hpp"

namespace psi {

struct ModelConfig {
  int layers{2};
  int width{64};
  int heads{4};
  int context{320};
  uint16_t vocab{512};
  uint32_t pointer_count{0};
  float init_std{0.02f};
  // Value positions also receive their owning pointer's embedding. This adds
  // no information (the pointer token precedes the value) but removes the
  // need to carry the binding through attention alone.
  bool fused_pointer_embedding{true};

  int embed_rows() const { return static_cast<int>(vocab) + static_cast<int>(pointer_count); }
  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Warmup-stable-decay learning rate: linear ramp over `warmup` steps, flat
// peak for `stable` steps, then linear decay over `decay` steps. Steps are
// 1-based update indices.
struct WsdSchedule {
  int warmup{50};
  int stable{500};
  int decay{100};
  float peak_lr{3e-3f};

  int stable_end() const { return warmup + stable; }
  int total_steps() const { return warmup + stable + decay; }
  float lr_at(int step) const;
  bool operator==(const WsdSchedule&) const = default;
};

void to_json(nlohmann::json& j, const WsdSchedule& s);
void from_json(const nlohmann::json& j, WsdSchedule& s);

struct Tensor {
  std::string name;
  std::vector<int> shape;
  Eigen::MatrixXf v;
};

// Decoder-only causal transformer over interleaved pointer/value ids.
// Pointer p embeds as row vocab+p, value code c as row c. Loss applies only
// at positions whose next token is a value. All arithmetic is f32 with fixed
// evaluation order, so training is bit-reproducible.
class LrasModel {
public:
  explicit LrasModel(const ModelConfig& cfg);

  void init_params(Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }

  std::vector<Eigen::MatrixXf> zero_like_params() const;

  // Mean cross-entropy over supervised value positions; accumulates
  // d(loss)/d(param) into `grads` (same order as params()). Returns the count
  // of supervised positions in `rows`.
  double loss_and_grad(const TokenSequence& seq,
                       std::vector<Eigen::MatrixXf>& grads,
                       int* rows = nullptr) const;
  double loss_only(const TokenSequence& seq, int* rows = nullptr) const;

  // Incremental inference state: per-layer key/value history.
  struct Cache {
    std::vector<Eigen::MatrixXf> k;  // layers x (context, width)
    std::vector<Eigen::MatrixXf> v;
    int len{0};
  };

  Cache make_cache() const;
  // Appends one token (embedding row main_id, plus aux_id if >= 0) and
  // returns the value-vocabulary logits at the new position.
  Eigen::VectorXf extend(Cache& cache, int main_id, int aux_id = -1) const;
  // Same computation without mutating the cache.
  Eigen::VectorXf peek(const Cache& cache, int main_id, int aux_id = -1) const;

  // Convenience: input ids (embedding rows) of a token sequence, including
  // per-position aux ids for fused pointer embeddings (-1 where none).
  struct EncodedSeq {
    std::vector<int> main;
    std::vector<int> aux;
    std::vector<int> target;  // supervised value code or -1, aligned to
                              // predicting position
  };
  EncodedSeq encode_sequence(const TokenSequence& seq) const;

private:
  struct Workspace;
  void forward(const EncodedSeq& es, Workspace& ws) const;
  Eigen::VectorXf step_logits(const Cache& cache, int main_id, int aux_id,
                              Eigen::MatrixXf* k_out,
                              Eigen::MatrixXf* v_out) const;

  ModelConfig cfg_;
  std::vector<Tensor> params_;
  std::unordered_map<std::string, int> index_;

  const Eigen::MatrixXf& p(const std::string& name) const;
  Eigen::MatrixXf& p(const std::string& name);

  friend class ModelGradCheck;
};

}  // namespace psi
