#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psi/model.hpp"
#include "psi/registry.hpp"

namespace psi {

enum class TrainPhase { warmup, stable, decay, final_ };

std::string to_string(TrainPhase p);
TrainPhase phase_from_string(const std::string& s);

// Self-contained training snapshot: parameters, optimizer moments, schedule
// position and the data-stream generator state. Loading and continuing
// reproduces the uninterrupted run bit-for-bit.
struct Checkpoint {
  ModelConfig model;
  WsdSchedule schedule;
  int step{0};
  TrainPhase phase{TrainPhase::warmup};
  ModalityRegistry registry;
  VocabLayout vocab;
  uint64_t data_rng_state{0};
  double camera_fraction{0.0};
  nlohmann::json extra;  // free-form provenance (world config, mix spec, ...)

  std::vector<Tensor> params;
  std::vector<Tensor> adam_m;
  std::vector<Tensor> adam_v;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

struct TrainLogPoint {
  int step{0};
  float lr{0.0f};
  float loss{0.0f};
};

void save_loss_csv(const std::filesystem::path& path,
                   const std::vector<TrainLogPoint>& curve);
std::vector<TrainLogPoint> load_loss_csv(const std::filesystem::path& path);

}  // namespace psi
