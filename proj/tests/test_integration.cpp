#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <memory>

#include "psi/dataset.hpp"
#include "psi/integration.hpp"
#include "psi/oracle.hpp"
#include "psi/train.hpp"
#include "psi/world_kv.hpp"

using namespace psi;

namespace {

WorldConfig tiny_world() {
  KvConfig kv = KvConfig::parse_text(
      "grid_size=8\npatch_size=2\nn_sprites=1\nsprite_min=2\nsprite_max=2\n"
      "velocity_set=2:0,-2:0\npos_step=2\n");
  return world_from_kv(kv);
}

struct IntegrationRig {
  WorldConfig world = tiny_world();
  VocabLayout vocab = VocabLayout::standard();
  Codebook rgb_book;
  Codebook flow_book;
  ModalityRegistry reg;  // rgb + camera; flow not yet registered

  IntegrationRig() {
    FitSamples s = collect_fit_samples(world, 48, 5);
    Rng rng(5);
    rgb_book =
        fit_rgb_codebook(s.rgb_patches, world.patch_size, 2, vocab, rng);
    flow_book = fit_flow_codebook(s.flows, vocab, rng);
    reg = ModalityRegistry(RegistryShape{2, 4, 4, rgb_book.depth()});
    reg.register_camera();
  }

  SequenceSampler rgb_sampler(double camera_fraction = 0.0) const {
    DatasetSpec spec;
    spec.world = world;
    spec.camera_fraction = camera_fraction;
    return make_sampler(spec, rgb_book, nullptr, reg, vocab);
  }

  ModelConfig model_config() const {
    ModelConfig m;
    m.layers = 2;
    m.width = 32;
    m.heads = 2;
    m.context = 192;
    m.vocab = vocab.vocab_size;
    m.pointer_count = reg.pointer_count();
    return m;
  }

  TrainResult pretrain(uint64_t seed = 123) const {
    WsdSchedule sched{4, 8, 4, 3e-3f};
    TrainOptions opts;
    opts.batch = 4;
    opts.threads = 2;
    RunMeta meta{reg, vocab, 0.0, {}};
    return train_model(model_config(), sched, rgb_sampler(), opts, seed, meta);
  }
};

// Ground-truth flow lifted straight off the episode; stands in for a probe.
ExtractedFlow gt_extractor(const Episode& ep, int step) {
  ExtractedFlow out;
  out.u = patch_flow(ep, step);
  out.valid = Grid<uint8_t>(out.u.rows, out.u.cols, 1);
  return out;
}

}  // namespace

TEST_CASE("adding the flow block never renumbers existing pointers") {
  IntegrationRig rig;
  std::vector<uint32_t> before = rig.reg.rgb_id_table();
  uint32_t old_count = rig.reg.pointer_count();

  ModalityRegistry grown = register_flow_modality(rig.reg, rig.vocab);
  CHECK(grown.has_flow());
  CHECK(grown.rgb_id_table() == before);
  CHECK(grown.pointer_count() > old_count);
  for (const Pointer& p : grown.flow_step_pointers(0))
    CHECK(grown.id_of(p) >= old_count);

  // Registering again is a no-op, not another block.
  ModalityRegistry again = register_flow_modality(grown, rig.vocab);
  CHECK(again.pointer_count() == grown.pointer_count());
  CHECK(again.rgb_id_table() == before);
}

TEST_CASE("flow fields tokenize completely with unknown for the invalid") {
  IntegrationRig rig;
  ModalityRegistry reg = register_flow_modality(rig.reg, rig.vocab);

  Grid<Vec2> u(4, 4, Vec2{0, 0});
  u.at(1, 2) = {2, 0};
  u.at(3, 0) = {-2, 0};
  Grid<uint8_t> valid(4, 4, 1);
  valid.at(0, 3) = 0;

  TokenizedFlow t = tokenize_flow(u, &valid, rig.flow_book, reg, 0);
  CHECK(!t.saturated);
  CHECK(t.datum.size() == 16);
  Code unknown = rig.vocab.unknown_flow_code();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      Code code = t.datum.at(Pointer::flow(0, r, c));
      if (!valid.at(r, c))
        CHECK(code == unknown);
      else
        CHECK(code == encode_flow(rig.flow_book, u.at(r, c)).code);
    }

  // Displacements outside the fitted hull still tokenize but raise the flag.
  Grid<Vec2> wild(4, 4, Vec2{50, 50});
  CHECK(tokenize_flow(wild, nullptr, rig.flow_book, reg, 0).saturated);

  Grid<uint8_t> short_mask(2, 2, 1);
  CHECK_THROWS_AS(tokenize_flow(u, &short_mask, rig.flow_book, reg, 0),
                  ShapeError);
  CHECK_THROWS_AS(tokenize_flow(u, &valid, rig.flow_book, reg, 1), ShapeError);
  CHECK_THROWS_AS(tokenize_flow(u, &valid, rig.flow_book, rig.reg, 0),
                  CapabilityError);
}

TEST_CASE("mixed sequences keep groups in causal order") {
  IntegrationRig rig;
  ModalityRegistry reg = register_flow_modality(rig.reg, rig.vocab);
  DatasetSpec spec;
  spec.world = rig.world;
  spec.camera_fraction = 1.0;
  spec.include_flow = true;
  spec.flow_fraction = 1.0;
  SequenceSampler sampler =
      make_sampler(spec, rig.rgb_book, &rig.flow_book, reg, rig.vocab);

  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    TokenSequence seq = sampler(rng);
    CHECK(!seq.has_trailing_pointer());

    // Rank of each group as it appears in the stream: f0 rgb, camera, flow,
    // f1 rgb. Later groups must start after earlier ones end.
    auto group_rank = [&](const Pointer& p) {
      if (p.modality == Modality::rgb) return p.frame == 0 ? 0 : 3;
      return p.modality == Modality::camera ? 1 : 2;
    };
    int prev_rank = 0;
    std::map<int, int> seen;
    for (size_t i = 0; i < seq.items.size(); i += 2) {
      Pointer p = reg.pointer_of(seq.items[i]);
      int rank = group_rank(p);
      CHECK(rank >= prev_rank);
      prev_rank = rank;
      seen[rank] += 1;
    }
    CHECK(seen[0] == 32);  // 16 patches x 2 levels
    CHECK(seen[1] == 2);
    CHECK(seen[2] == 16);
    CHECK(seen[3] == 32);

    // The stream deserializes to a coherent datum of the full size.
    Datum d = deserialize(seq, reg, rig.vocab.vocab_size);
    CHECK(d.size() == 82);
  }
}

TEST_CASE("an unknown flow token adds no information") {
  IntegrationRig rig;
  ModalityRegistry reg = register_flow_modality(rig.reg, rig.vocab);
  OracleWorldModel psi(rig.world, reg, rig.vocab, rig.rgb_book, rig.flow_book);

  Episode ep = gen_episode(rig.world, 3);
  EpisodeTokens toks =
      tokenize_episode(ep, rig.rgb_book, &rig.flow_book, rig.vocab);
  Datum f0 = rgb_frame_datum(toks, reg, 0);
  Datum with_unknown = f0;
  with_unknown.insert(Pointer::flow(0, 1, 1), rig.vocab.unknown_flow_code());

  std::vector<Pointer> queries;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) queries.push_back(Pointer::rgb(1, r, c, 0));
  auto base = psi.predict_parallel(f0, queries);
  auto marked = psi.predict_parallel(with_unknown, queries);
  REQUIRE(base.size() == marked.size());
  for (size_t i = 0; i < base.size(); ++i)
    for (size_t c = 0; c < base[i].size(); ++c)
      CHECK(marked[i][c] == doctest::Approx(base[i][c]).epsilon(1e-12));
}

TEST_CASE("continuation grows the model and trains on mixed streams") {
  IntegrationRig rig;
  TrainResult pre = rig.pretrain();
  REQUIRE(pre.stable_ckpt.has_value());
  CHECK(!is_flow_integrated(*pre.stable_ckpt));

  MixedDatasetSpec spec;
  spec.mix_ratio = 0.5;
  spec.camera_fraction = 0.0;
  TrainOptions opts;
  opts.batch = 4;
  opts.threads = 2;

  IntegrationResult res =
      continue_training(*pre.stable_ckpt, rig.world, rig.rgb_book,
                        rig.flow_book, spec, 4, 4, opts);

  CHECK(is_flow_integrated(res.ckpt));
  CHECK(res.ckpt.registry.rgb_id_table() == rig.reg.rgb_id_table());
  CHECK(res.ckpt.model.pointer_count == res.ckpt.registry.pointer_count());
  CHECK(res.ckpt.model.embed_rows() >
        pre.stable_ckpt->model.embed_rows());
  CHECK(res.ckpt.params[0].v.rows() == res.ckpt.model.embed_rows());
  CHECK(res.ckpt.phase == TrainPhase::final_);
  CHECK(res.ckpt.extra["integration"]["mix_ratio"] == 0.5);

  // Continues right after the stable snapshot: 4 extra stable + 4 decay.
  REQUIRE(res.curve.size() == 8);
  CHECK(res.curve.front().step == pre.stable_ckpt->step + 1);
  for (const TrainLogPoint& p : res.curve) CHECK(std::isfinite(p.loss));

  // Bit-reproducible: same inputs, same continuation.
  IntegrationResult res2 =
      continue_training(*pre.stable_ckpt, rig.world, rig.rgb_book,
                        rig.flow_book, spec, 4, 4, opts);
  for (size_t i = 0; i < res.curve.size(); ++i)
    CHECK(res.curve[i].loss == res2.curve[i].loss);
  for (size_t t = 0; t < res.ckpt.params.size(); ++t)
    CHECK(res.ckpt.params[t].v == res2.ckpt.params[t].v);

  // The mixed continuation must not wreck pure-rgb prediction.
  double before = eval_mean_loss(pre.final_ckpt, rig.rgb_sampler(), 16, 99);
  double after = eval_mean_loss(res.ckpt, rig.rgb_sampler(), 16, 99);
  CHECK(after < before * 1.25);

  CHECK_THROWS_AS(continue_training(pre.final_ckpt, rig.world, rig.rgb_book,
                                    rig.flow_book, spec, 4, 4, opts),
                  PhaseError);
  CHECK_THROWS_AS(continue_training(*pre.stable_ckpt, rig.world, rig.rgb_book,
                                    rig.flow_book, spec, 4, 0, opts),
                  ConfigError);
  MixedDatasetSpec bad = spec;
  bad.mix_ratio = 1.5;
  CHECK_THROWS_AS(continue_training(*pre.stable_ckpt, rig.world, rig.rgb_book,
                                    rig.flow_book, bad, 4, 4, opts),
                  ConfigError);
}

TEST_CASE("extracted flow feeds the stream through the extractor hook") {
  IntegrationRig rig;
  TrainResult pre = rig.pretrain();
  REQUIRE(pre.stable_ckpt.has_value());

  MixedDatasetSpec spec;
  spec.mix_ratio = 1.0;
  spec.camera_fraction = 0.0;
  spec.flow_source = FlowTokenSource::extracted;
  TrainOptions opts;
  opts.batch = 2;
  opts.threads = 1;

  int calls = 0;
  FlowExtractor extractor = [&calls](const Episode& ep, int step,
                                     Rng&) -> ExtractedFlow {
    ++calls;
    return gt_extractor(ep, step);
  };
  IntegrationResult res =
      continue_training(*pre.stable_ckpt, rig.world, rig.rgb_book,
                        rig.flow_book, spec, 2, 2, opts, extractor);
  CHECK(is_flow_integrated(res.ckpt));
  CHECK(calls > 0);  // every mixed sequence consulted the hook

  // The hook is mandatory for extracted mode and its shape is checked.
  DatasetSpec dspec;
  dspec.world = rig.world;
  dspec.camera_fraction = 0.0;
  dspec.include_flow = true;
  dspec.flow_fraction = 1.0;
  dspec.flow_source = FlowTokenSource::extracted;
  ModalityRegistry reg = register_flow_modality(rig.reg, rig.vocab);
  CHECK_THROWS_AS(
      make_sampler(dspec, rig.rgb_book, &rig.flow_book, reg, rig.vocab),
      ConfigError);

  FlowExtractor bad_shape = [](const Episode&, int, Rng&) {
    return ExtractedFlow{Grid<Vec2>(2, 2), Grid<uint8_t>(2, 2, 1)};
  };
  SequenceSampler sampler = make_sampler(dspec, rig.rgb_book, &rig.flow_book,
                                         reg, rig.vocab, bad_shape);
  Rng rng(1);
  CHECK_THROWS_AS(sampler(rng), ShapeError);
}
