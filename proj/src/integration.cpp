#include "psi/integration.hpp"

#include "psi/error.hpp"

namespace psi {

void MixedDatasetSpec::validate() const {
  if (mix_ratio < 0.0 || mix_ratio > 1.0)
    throw ConfigError("mix_ratio must lie in [0, 1]");
  if (camera_fraction < 0.0 || camera_fraction > 1.0)
    throw ConfigError("camera_fraction must lie in [0, 1]");
}

ModalityRegistry register_flow_modality(const ModalityRegistry& reg,
                                        const VocabLayout& vocab) {
  vocab.validate();
  if (vocab.flow.size < 2)
    throw VocabularyError("flow span too small: needs codes plus the unknown slot");
  ModalityRegistry out = reg;
  std::vector<uint32_t> before = out.rgb_id_table();
  out.register_flow();
  if (out.rgb_id_table() != before)
    throw InvariantError("flow registration renumbered existing rgb pointers");
  return out;
}

TokenizedFlow tokenize_flow(const Grid<Vec2>& u, const Grid<uint8_t>* valid,
                            const Codebook& flow_book,
                            const ModalityRegistry& reg, int step) {
  if (!reg.has_flow())
    throw CapabilityError("registry has no flow modality to tokenize into");
  if (u.rows != reg.rows() || u.cols != reg.cols())
    throw ShapeError("flow field shape does not match the registry");
  if (valid && (valid->rows != u.rows || valid->cols != u.cols))
    throw ShapeError("validity mask shape does not match the flow field");
  if (step < 0 || step >= reg.steps()) throw ShapeError("flow step out of range");

  TokenizedFlow out;
  const VocabSpan& span = flow_book.level(0).span;
  const Code unknown = static_cast<Code>(span.offset + span.size - 1);
  for (int r = 0; r < u.rows; ++r)
    for (int c = 0; c < u.cols; ++c) {
      Code code = unknown;
      if (!valid || valid->at(r, c)) {
        FlowEncodeResult enc = encode_flow(flow_book, u.at(r, c));
        code = enc.code;
        out.saturated |= enc.saturated;
      }
      out.datum.insert(Pointer::flow(step, r, c), code);
    }
  return out;
}

IntegrationResult continue_training(const Checkpoint& stable_ckpt,
                                    const WorldConfig& world,
                                    const Codebook& rgb_book,
                                    const Codebook& flow_book,
                                    const MixedDatasetSpec& spec,
                                    int extra_stable_steps, int decay_steps,
                                    const TrainOptions& opts,
                                    FlowExtractor extractor) {
  spec.validate();
  if (stable_ckpt.phase != TrainPhase::stable)
    throw PhaseError("integration continues from a stable-phase checkpoint");
  if (extra_stable_steps < 0 || decay_steps < 1)
    throw ConfigError("need extra_stable_steps >= 0 and decay_steps >= 1");
  if (stable_ckpt.model.pointer_count != stable_ckpt.registry.pointer_count())
    throw InvariantError("checkpoint model/registry pointer counts disagree");

  ModalityRegistry reg =
      register_flow_modality(stable_ckpt.registry, stable_ckpt.vocab);

  Checkpoint start = stable_ckpt;
  start.registry = reg;
  start.model.pointer_count = reg.pointer_count();
  start.camera_fraction = spec.camera_fraction;

  // New flow-pointer embedding rows are appended past every existing id, so
  // learned rgb/camera rows carry over untouched. Fresh rows are seeded from
  // the checkpoint's stream state to keep the continuation reproducible.
  const int old_rows = stable_ckpt.model.embed_rows();
  const int new_rows = start.model.embed_rows();
  if (new_rows > old_rows) {
    Rng ext_rng = Rng(stable_ckpt.data_rng_state).fork(2);
    for (std::vector<Tensor>* ts :
         {&start.params, &start.adam_m, &start.adam_v}) {
      Tensor& t = (*ts)[0];
      if (t.name != "embed")
        throw InvariantError("checkpoint tensor order changed: embed not first");
      Eigen::MatrixXf grown =
          Eigen::MatrixXf::Zero(new_rows, t.v.cols());
      grown.topRows(old_rows) = t.v;
      t.v = std::move(grown);
      t.shape = {new_rows, static_cast<int>(t.v.cols())};
    }
    Eigen::MatrixXf& embed = start.params[0].v;
    for (int r = old_rows; r < new_rows; ++r)
      for (int c = 0; c < embed.cols(); ++c)
        embed(r, c) = ext_rng.normal_f32() * start.model.init_std;
  }

  WsdSchedule schedule = stable_ckpt.schedule;
  schedule.stable += extra_stable_steps;
  schedule.decay = decay_steps;

  DatasetSpec dspec;
  dspec.world = world;
  dspec.camera_fraction = spec.camera_fraction;
  dspec.include_flow = true;
  dspec.flow_fraction = spec.mix_ratio;
  dspec.flow_source = spec.flow_source;
  SequenceSampler sampler = make_sampler(dspec, rgb_book, &flow_book, reg,
                                         stable_ckpt.vocab, extractor);

  start.extra["integration"] = {
      {"mix_ratio", spec.mix_ratio},
      {"flow_source",
       spec.flow_source == FlowTokenSource::ground_truth ? "ground_truth"
                                                         : "extracted"},
      {"extra_stable_steps", extra_stable_steps},
      {"decay_steps", decay_steps},
  };

  TrainResult tr = resume_training(start, schedule, sampler, opts);
  return IntegrationResult{std::move(tr.final_ckpt), std::move(tr.curve)};
}

bool is_flow_integrated(const Checkpoint& ckpt) {
  return ckpt.registry.has_flow();
}

}  // namespace psi
