#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "psi/dataset.hpp"
#include "psi/model_predictor.hpp"
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

struct TrainRig {
  WorldConfig world = tiny_world();
  VocabLayout vocab = VocabLayout::standard();
  Codebook rgb_book;
  ModalityRegistry reg;
  SequenceSampler sampler;

  explicit TrainRig(double camera_fraction = 0.0) {
    FitSamples s = collect_fit_samples(world, 48, 5);
    Rng rng(5);
    rgb_book =
        fit_rgb_codebook(s.rgb_patches, world.patch_size, 2, vocab, rng);
    reg = ModalityRegistry(RegistryShape{2, 4, 4, rgb_book.depth()});
    reg.register_camera();
    DatasetSpec spec;
    spec.world = world;
    spec.camera_fraction = camera_fraction;
    sampler = make_sampler(spec, rgb_book, nullptr, reg, vocab);
  }

  ModelConfig model_config(int context = 160) const {
    ModelConfig m;
    m.layers = 2;
    m.width = 32;
    m.heads = 2;
    m.context = context;
    m.vocab = vocab.vocab_size;
    m.pointer_count = reg.pointer_count();
    return m;
  }
};

TokenSequence sample_once(const SequenceSampler& sampler, uint64_t seed) {
  Rng rng(seed);
  return sampler(rng);
}

}  // namespace

TEST_CASE("analytic gradients match finite differences") {
  TrainRig rig;
  ModelConfig mcfg = rig.model_config();
  mcfg.layers = 1;
  mcfg.width = 16;
  mcfg.heads = 2;
  LrasModel model(mcfg);
  Rng rng(7);
  model.init_params(rng);

  TokenSequence seq = sample_once(rig.sampler, 3);
  auto grads = model.zero_like_params();
  model.loss_and_grad(seq, grads);

  // Probe a few entries of every parameter tensor with central differences.
  // f64 would be tighter; in f32 both sides agree to ~1e-2 relative.
  const float h = 2e-2f;
  Rng pick(13);
  for (size_t t = 0; t < model.params().size(); ++t) {
    Eigen::MatrixXf& m = model.params()[t].v;
    for (int probe = 0; probe < 3; ++probe) {
      int r = static_cast<int>(pick.uniform_u64(m.rows()));
      int c = static_cast<int>(pick.uniform_u64(m.cols()));
      float saved = m(r, c);
      m(r, c) = saved + h;
      double lp = model.loss_only(seq);
      m(r, c) = saved - h;
      double lm = model.loss_only(seq);
      m(r, c) = saved;
      double fd = (lp - lm) / (2.0 * h);
      double an = grads[t](r, c);
      INFO(model.params()[t].name << "(" << r << "," << c << ")"
                                  << " fd=" << fd << " an=" << an);
      double scale = std::max({std::abs(fd), std::abs(an), 5e-3});
      CHECK(std::abs(fd - an) / scale < 0.08);
    }
  }
}

TEST_CASE("embedding rows outside the sequence receive zero gradient") {
  TrainRig rig;
  ModelConfig mcfg = rig.model_config();
  LrasModel model(mcfg);
  Rng rng(11);
  model.init_params(rng);
  TokenSequence seq = sample_once(rig.sampler, 4);
  auto grads = model.zero_like_params();
  model.loss_and_grad(seq, grads);

  std::set<int> used;
  auto es = model.encode_sequence(seq);
  for (int id : es.main) used.insert(id);
  for (int id : es.aux)
    if (id >= 0) used.insert(id);
  const Eigen::MatrixXf& ge = grads[0];  // embedding table is parameter 0
  REQUIRE(model.params()[0].name == "embed");
  int zero_rows = 0, nonzero_rows = 0;
  for (int r = 0; r < ge.rows(); ++r) {
    bool zero = ge.row(r).cwiseAbs().maxCoeff() == 0.0f;
    if (used.count(r)) {
      // Used rows may still get zero grad; don't assert either way.
    } else if (r < static_cast<int>(mcfg.vocab)) {
      // Unused value rows can receive gradient through the softmax.
      (void)zero;
    } else {
      // Pointer rows absent from the sequence cannot.
      CHECK(zero);
      ++zero_rows;
    }
    nonzero_rows += !zero;
  }
  CHECK(zero_rows > 0);
  CHECK(nonzero_rows > 0);
}

TEST_CASE("learning rate ramps, holds and decays to a floor above zero") {
  WsdSchedule s;
  s.warmup = 10;
  s.stable = 20;
  s.decay = 10;
  s.peak_lr = 1.0f;
  CHECK(s.lr_at(1) == doctest::Approx(0.1f));
  CHECK(s.lr_at(10) == doctest::Approx(1.0f));
  CHECK(s.lr_at(11) == doctest::Approx(1.0f));
  CHECK(s.lr_at(30) == doctest::Approx(1.0f));
  // Decay ramps linearly down to peak/decay on the final step, never zero.
  CHECK(s.lr_at(32) < 1.0f);
  for (int t = 32; t <= 40; ++t) {
    CHECK(s.lr_at(t) > 0.0f);
    CHECK(s.lr_at(t) < s.lr_at(t - 1));
  }
  CHECK(s.lr_at(40) == doctest::Approx(1.0f / 10).epsilon(1e-4));
  CHECK_THROWS_AS(s.lr_at(0), InvariantError);
  CHECK_THROWS_AS(s.lr_at(41), InvariantError);
}

TEST_CASE("training is bit-identical across reruns and thread counts") {
  TrainRig rig;
  WsdSchedule sched{4, 8, 4, 3e-3f};
  TrainOptions opts;
  opts.batch = 4;
  opts.threads = 1;
  RunMeta meta{rig.reg, rig.vocab, 0.0, {}};

  TrainResult a = train_model(rig.model_config(), sched, rig.sampler, opts,
                              123, meta);
  TrainResult b = train_model(rig.model_config(), sched, rig.sampler, opts,
                              123, meta);
  opts.threads = 4;
  TrainResult c = train_model(rig.model_config(), sched, rig.sampler, opts,
                              123, meta);

  REQUIRE(a.curve.size() == b.curve.size());
  REQUIRE(a.curve.size() == c.curve.size());
  for (size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].loss == b.curve[i].loss);
    CHECK(a.curve[i].loss == c.curve[i].loss);
  }
  for (size_t t = 0; t < a.final_ckpt.params.size(); ++t) {
    CHECK(a.final_ckpt.params[t].v == b.final_ckpt.params[t].v);
    CHECK(a.final_ckpt.params[t].v == c.final_ckpt.params[t].v);
  }

  TrainResult d = train_model(rig.model_config(), sched, rig.sampler, opts,
                              124, meta);
  CHECK(a.curve.back().loss != d.curve.back().loss);
}

TEST_CASE("a single memorizable sequence trains to near-zero loss") {
  TrainRig rig;
  TokenSequence fixed = sample_once(rig.sampler, 9);
  SequenceSampler constant = [fixed](Rng&) { return fixed; };
  WsdSchedule sched{10, 120, 20, 1e-2f};
  TrainOptions opts;
  opts.batch = 2;
  opts.threads = 2;
  RunMeta meta{rig.reg, rig.vocab, 0.0, {}};
  TrainResult r =
      train_model(rig.model_config(), sched, constant, opts, 5, meta);
  CHECK(r.curve.front().loss > 1.0f);
  CHECK(r.curve.back().loss < 0.05f);
}

TEST_CASE("resuming from the stable snapshot reproduces the full run") {
  TrainRig rig;
  WsdSchedule sched{4, 10, 6, 3e-3f};
  TrainOptions opts;
  opts.batch = 4;
  opts.threads = 2;
  RunMeta meta{rig.reg, rig.vocab, 0.0, {}};
  TrainResult full = train_model(rig.model_config(), sched, rig.sampler, opts,
                                 77, meta);
  REQUIRE(full.stable_ckpt.has_value());
  CHECK(full.stable_ckpt->phase == TrainPhase::stable);
  CHECK(full.stable_ckpt->step == sched.stable_end());

  TrainResult resumed =
      resume_training(*full.stable_ckpt, sched, rig.sampler, opts);
  // The resumed curve covers steps after the snapshot; compare the overlap.
  size_t offset = full.curve.size() - resumed.curve.size();
  for (size_t i = 0; i < resumed.curve.size(); ++i) {
    CHECK(resumed.curve[i].step == full.curve[offset + i].step);
    CHECK(resumed.curve[i].loss == full.curve[offset + i].loss);
  }
  for (size_t t = 0; t < full.final_ckpt.params.size(); ++t)
    CHECK(resumed.final_ckpt.params[t].v == full.final_ckpt.params[t].v);

  // A decayed checkpoint is final: the stable phase cannot be re-entered.
  WsdSchedule longer = sched;
  longer.stable += 10;
  CHECK_THROWS_AS(
      resume_training(full.final_ckpt, longer, rig.sampler, opts), PhaseError);

  // Warmup or peak mismatches are config drift, not a resumable run.
  WsdSchedule drift = sched;
  drift.peak_lr *= 2;
  CHECK_THROWS_AS(resume_training(*full.stable_ckpt, drift, rig.sampler, opts),
                  ConfigError);
}

TEST_CASE("checkpoints round-trip bit-exactly through disk") {
  namespace fs = std::filesystem;
  TrainRig rig;
  WsdSchedule sched{3, 6, 3, 3e-3f};
  TrainOptions opts;
  opts.batch = 2;
  opts.threads = 2;
  RunMeta meta{rig.reg, rig.vocab, 0.25, {{"note", "roundtrip"}}};
  TrainResult r = train_model(rig.model_config(), sched, rig.sampler, opts,
                              55, meta);
  fs::path path = fs::temp_directory_path() / "psi_ckpt_roundtrip.bin";
  r.final_ckpt.save(path);
  Checkpoint back = Checkpoint::load(path);
  CHECK(back.model == r.final_ckpt.model);
  CHECK(back.schedule == r.final_ckpt.schedule);
  CHECK(back.step == r.final_ckpt.step);
  CHECK(back.phase == r.final_ckpt.phase);
  CHECK(back.registry == r.final_ckpt.registry);
  CHECK(back.vocab == r.final_ckpt.vocab);
  CHECK(back.data_rng_state == r.final_ckpt.data_rng_state);
  CHECK(back.camera_fraction == r.final_ckpt.camera_fraction);
  CHECK(back.extra == r.final_ckpt.extra);
  REQUIRE(back.params.size() == r.final_ckpt.params.size());
  for (size_t t = 0; t < back.params.size(); ++t) {
    CHECK(back.params[t].name == r.final_ckpt.params[t].name);
    CHECK(back.params[t].v == r.final_ckpt.params[t].v);
    CHECK(back.adam_m[t].v == r.final_ckpt.adam_m[t].v);
    CHECK(back.adam_v[t].v == r.final_ckpt.adam_v[t].v);
  }
  fs::remove(path);
}

TEST_CASE("incremental cache inference matches the full forward pass") {
  TrainRig rig;
  ModelConfig mcfg = rig.model_config();
  LrasModel model(mcfg);
  Rng rng(31);
  model.init_params(rng);

  TokenSequence seq = sample_once(rig.sampler, 21);
  auto es = model.encode_sequence(seq);

  LrasModel::Cache cache = model.make_cache();
  Eigen::VectorXf last;
  for (size_t i = 0; i < es.main.size(); ++i)
    last = model.extend(cache, es.main[i], es.aux[i]);

  // peek must agree with extend and leave the cache untouched.
  LrasModel::Cache cache2 = model.make_cache();
  for (size_t i = 0; i + 1 < es.main.size(); ++i)
    model.extend(cache2, es.main[i], es.aux[i]);
  int before = cache2.len;
  Eigen::VectorXf peeked =
      model.peek(cache2, es.main.back(), es.aux.back());
  CHECK(cache2.len == before);
  CHECK(peeked == last);
}

TEST_CASE("the model predictor interface answers random-access queries") {
  TrainRig rig;
  WsdSchedule sched{10, 60, 20, 3e-3f};
  TrainOptions opts;
  opts.batch = 8;
  opts.threads = 4;
  RunMeta meta{rig.reg, rig.vocab, 0.0, {{"world", rig.world}}};
  TrainResult r = train_model(rig.model_config(), sched, rig.sampler, opts,
                              42, meta);
  ModelPredictor psi(r.final_ckpt);

  Episode ep = gen_episode(rig.world, 5);
  EpisodeTokens toks = tokenize_episode(ep, rig.rgb_book, nullptr, rig.vocab);
  Datum f0 = rgb_frame_datum(toks, rig.reg, 0);

  std::vector<Pointer> queries;
  for (int rr = 0; rr < 4; ++rr)
    for (int cc = 0; cc < 4; ++cc) queries.push_back(Pointer::rgb(1, rr, cc, 0));
  auto dists = psi.predict_parallel(f0, queries);
  REQUIRE(dists.size() == queries.size());
  for (const DistVec& d : dists) {
    double sum = 0.0;
    for (double p : d) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
  }

  // Temperature-zero sequential sampling is the argmax chain, deterministic
  // regardless of the rng.
  Rng r1(1), r2(99);
  Datum s1 = psi.sample_sequential(f0, queries, 0.0, 0, r1);
  Datum s2 = psi.sample_sequential(f0, queries, 0.0, 0, r2);
  CHECK(s1 == s2);
}
