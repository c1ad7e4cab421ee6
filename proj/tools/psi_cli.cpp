// Command-line reproducibility surface: dataset generation, codebook fitting,
// training, probing, integration and evaluation. Every command takes
// --config/--seed/--out, validates its config against a strict key schema and
// writes the resolved config + tool version + seed next to its outputs.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "psi/dataset.hpp"
#include "psi/integration.hpp"
#include "psi/io.hpp"
#include "psi/metrics.hpp"
#include "psi/model_predictor.hpp"
#include "psi/oracle.hpp"
#include "psi/probes.hpp"
#include "psi/serial_json.hpp"
#include "psi/stats.hpp"
#include "psi/train.hpp"
#include "psi/version.hpp"
#include "psi/world_kv.hpp"

namespace fs = std::filesystem;
using namespace psi;

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  uint64_t seed = 0;
  std::string task;  // eval only
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key=value config file")->required();
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--seed", c.seed, "run seed");
}

std::vector<std::string> with_world(std::initializer_list<const char*> extra) {
  std::vector<std::string> keys = world_kv_keys();
  for (const char* e : extra) keys.emplace_back(e);
  return keys;
}

std::vector<std::string> plain(std::initializer_list<const char*> keys) {
  return std::vector<std::string>(keys.begin(), keys.end());
}

void stamp(const fs::path& out, const KvConfig& resolved, uint64_t seed,
           const std::string& command) {
  fs::create_directories(out);
  resolved.write_file(out / "config.resolved.txt");
  nlohmann::json j{
      {"tool_version", kVersion}, {"seed", seed}, {"command", command}};
  std::ofstream f(out / "run.json");
  f << j.dump(2) << "\n";
}

KvConfig resolved_with_world(const KvConfig& kv, const WorldConfig& world) {
  KvConfig resolved = world_to_kv(world);
  for (const auto& [k, v] : kv.entries()) resolved.set(k, v);
  return resolved;
}

WorldConfig world_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.extra.contains("world"))
    throw ConfigError("checkpoint carries no world config");
  return ckpt.extra.at("world").get<WorldConfig>();
}

// Predictor plus all the token plumbing a probe needs, from either an exact
// oracle (world + codebooks) or a trained checkpoint.
struct Stack {
  std::unique_ptr<Predictor> psi;
  ModalityRegistry reg;
  VocabLayout vocab;
  Codebook rgb_book;
  std::optional<Codebook> flow_book;
  WorldConfig world;
  std::optional<Checkpoint> ckpt;

  ProbeContext ctx() const {
    return make_probe_context(*psi, reg, vocab, rgb_book,
                              flow_book ? &*flow_book : nullptr, world);
  }
};

std::shared_ptr<Stack> build_stack(const KvConfig& kv) {
  auto s = std::make_shared<Stack>();
  std::string source = kv.get_or("source", "oracle");
  s->rgb_book = Codebook::load(kv.get("rgb_book"));
  if (kv.has("flow_book")) s->flow_book = Codebook::load(kv.get("flow_book"));
  if (source == "oracle") {
    s->world = world_from_kv(kv);
    s->vocab = VocabLayout::standard();
    RegistryShape shape{s->world.frames, s->world.patches_per_side(),
                        s->world.patches_per_side(), s->rgb_book.depth()};
    s->reg = ModalityRegistry(shape);
    s->reg.register_camera();
    if (s->flow_book) s->reg.register_flow();
    s->psi = std::make_unique<OracleWorldModel>(s->world, s->reg, s->vocab,
                                                s->rgb_book, s->flow_book);
  } else if (source == "checkpoint") {
    s->ckpt = Checkpoint::load(kv.get("checkpoint"));
    s->world = world_from_checkpoint(*s->ckpt);
    s->reg = s->ckpt->registry;
    s->vocab = s->ckpt->vocab;
    s->psi = std::make_unique<ModelPredictor>(*s->ckpt);
  } else {
    throw ConfigError("source must be 'oracle' or 'checkpoint'");
  }
  return s;
}

// Evaluation episodes for probes are tracer-free: the tracer is the probe's
// own intervention tool, and a frame with two dots explains nothing.
WorldConfig probe_world(WorldConfig w) {
  w.tracer_prob = 0.0;
  return w;
}

std::vector<PatchIx> all_patches(int pps) {
  std::vector<PatchIx> out;
  for (int r = 0; r < pps; ++r)
    for (int c = 0; c < pps; ++c) out.push_back({r, c});
  return out;
}

void write_flow_arrays(const fs::path& dir, const Grid<Vec2>& u,
                       const Grid<uint8_t>& valid) {
  std::vector<int16_t> uf, vf;
  for (int r = 0; r < u.rows; ++r)
    for (int c = 0; c < u.cols; ++c) {
      uf.push_back(static_cast<int16_t>(u.at(r, c).x));
      uf.push_back(static_cast<int16_t>(u.at(r, c).y));
      vf.push_back(valid.at(r, c));
    }
  write_i16_array(dir / "flow_pred", uf, {u.rows, u.cols, 2});
  write_i16_array(dir / "flow_valid", vf, {u.rows, u.cols});
}

Grid<double> gt_patch_depth(const Episode& ep, int frame) {
  Grid<int16_t> maj = patch_majority(ep.depth[frame], ep.config.patch_size);
  Grid<double> z(maj.rows, maj.cols, 0.0);
  for (size_t i = 0; i < maj.data.size(); ++i)
    z.data[i] = static_cast<double>(maj.data[i]);
  return z;
}

// Center-of-mass pixel of one sprite's ground-truth mask; nullopt when the
// sprite is invisible in the frame.
std::optional<Vec2> sprite_seed_pixel(const Episode& ep, int frame,
                                      int sprite) {
  const Grid<uint8_t>& seg = ep.segments[frame];
  long sx = 0, sy = 0, n = 0;
  for (int y = 0; y < seg.rows; ++y)
    for (int x = 0; x < seg.cols; ++x)
      if (seg.at(y, x) == sprite + 1) {
        sx += x;
        sy += y;
        ++n;
      }
  if (n == 0) return std::nullopt;
  Vec2 px{static_cast<int>(sx / n), static_cast<int>(sy / n)};
  if (seg.at(px.y, px.x) != sprite + 1) return std::nullopt;
  return px;
}

// ---- subcommands ----

void cmd_gen_data(const KvConfig& kv, const Common& c) {
  kv.require_known_keys(with_world({"episodes"}));
  WorldConfig world = world_from_kv(kv);
  int episodes = static_cast<int>(kv.get_int("episodes", 8));
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  fs::path out(c.out);
  stamp(out, resolved_with_world(kv, world), c.seed, "gen-data");
  for (int i = 0; i < episodes; ++i) {
    Episode ep = gen_episode(world, c.seed + static_cast<uint64_t>(i));
    char name[32];
    std::snprintf(name, sizeof(name), "episode_%03d", i);
    export_episode(ep, out / name);
  }
  nlohmann::json manifest{{"episodes", episodes},
                          {"seed", c.seed},
                          {"grid_size", world.grid_size},
                          {"frames", world.frames}};
  std::ofstream(out / "manifest.json") << manifest.dump(2) << "\n";
}

void cmd_fit_quantizer(const KvConfig& kv, const Common& c) {
  kv.require_known_keys(with_world({"fit_episodes", "rgb_depth", "fit_flow"}));
  WorldConfig world = world_from_kv(kv);
  int n = static_cast<int>(kv.get_int("fit_episodes", 64));
  int depth = static_cast<int>(kv.get_int("rgb_depth", 2));
  bool fit_flow = kv.get_bool("fit_flow", true);
  fs::path out(c.out);
  stamp(out, resolved_with_world(kv, world), c.seed, "fit-quantizer");

  FitSamples samples = collect_fit_samples(world, n, c.seed);
  VocabLayout vocab = VocabLayout::standard();
  Rng rng(c.seed);
  Codebook rgb =
      fit_rgb_codebook(samples.rgb_patches, world.patch_size, depth, vocab, rng);
  rgb.save(out / "rgb.book");
  nlohmann::json summary{{"rgb_depth", depth},
                         {"rgb_samples", samples.rgb_patches.size() /
                                             (world.patch_size *
                                              world.patch_size * 3)}};
  if (fit_flow) {
    Codebook flow = fit_flow_codebook(samples.flows, vocab, rng);
    flow.save(out / "flow.book");
    summary["flow_samples"] = samples.flows.size();
  }
  std::ofstream(out / "fit.json") << summary.dump(2) << "\n";
}

void cmd_train(const KvConfig& kv, const Common& c) {
  kv.require_known_keys(with_world(
      {"rgb_book", "layers", "width", "heads", "context", "init_std", "warmup",
       "stable", "decay", "peak_lr", "batch", "threads", "camera_fraction",
       "weight_decay", "clip_norm", "log_every"}));
  WorldConfig world = world_from_kv(kv);
  Codebook rgb_book = Codebook::load(kv.get("rgb_book"));
  fs::path out(c.out);
  stamp(out, resolved_with_world(kv, world), c.seed, "train");

  VocabLayout vocab = VocabLayout::standard();
  RegistryShape shape{world.frames, world.patches_per_side(),
                      world.patches_per_side(), rgb_book.depth()};
  ModalityRegistry reg(shape);
  reg.register_camera();

  DatasetSpec dspec;
  dspec.world = world;
  dspec.camera_fraction = kv.get_double("camera_fraction", 0.5);
  SequenceSampler sampler =
      make_sampler(dspec, rgb_book, nullptr, reg, vocab);

  ModelConfig mcfg;
  mcfg.layers = static_cast<int>(kv.get_int("layers", 2));
  mcfg.width = static_cast<int>(kv.get_int("width", 64));
  mcfg.heads = static_cast<int>(kv.get_int("heads", 4));
  mcfg.context = static_cast<int>(kv.get_int("context", 320));
  mcfg.vocab = vocab.vocab_size;
  mcfg.pointer_count = reg.pointer_count();
  mcfg.init_std = static_cast<float>(kv.get_double("init_std", 0.02));

  WsdSchedule sched;
  sched.warmup = static_cast<int>(kv.get_int("warmup", 50));
  sched.stable = static_cast<int>(kv.get_int("stable", 500));
  sched.decay = static_cast<int>(kv.get_int("decay", 100));
  sched.peak_lr = static_cast<float>(kv.get_double("peak_lr", 3e-3));

  TrainOptions opts;
  opts.batch = static_cast<int>(kv.get_int("batch", 8));
  opts.threads = static_cast<int>(kv.get_int("threads", 4));
  opts.weight_decay = static_cast<float>(kv.get_double("weight_decay", 0.01));
  opts.clip_norm = static_cast<float>(kv.get_double("clip_norm", 1.0));
  opts.log_every = static_cast<int>(kv.get_int("log_every", 10));

  RunMeta meta{reg, vocab, dspec.camera_fraction, {{"world", world}}};
  TrainResult tr = train_model(mcfg, sched, sampler, opts, c.seed, meta);
  tr.final_ckpt.save(out / "final.ckpt");
  if (tr.stable_ckpt) tr.stable_ckpt->save(out / "stable.ckpt");
  save_loss_csv(out / "loss.csv", tr.curve);
  MetricsWriter mw(out / "metrics.jsonl");
  mw.write("train_final_loss", tr.curve.back().loss, "train",
           tr.curve.back().step, static_cast<int64_t>(c.seed));
}

void cmd_sample(const KvConfig& kv, const Common& c) {
  kv.require_known_keys(plain({"checkpoint", "n_samples", "temperature"}));
  Checkpoint ckpt = Checkpoint::load(kv.get("checkpoint"));
  WorldConfig world = world_from_checkpoint(ckpt);
  int n = static_cast<int>(kv.get_int("n_samples", 4));
  double temp = kv.get_double("temperature", 1.0);
  fs::path out(c.out);
  stamp(out, resolved_with_world(kv, world), c.seed, "sample");

  ModelPredictor psi(ckpt);
  const ModalityRegistry& reg = psi.registry();
  // Books are not needed for token-level sampling metrics, only for frames; we
  // reconstruct frames through the datum round-trip instead of decoding.
  MetricsWriter mw(out / "metrics.jsonl");
  for (int i = 0; i < n; ++i) {
    Episode ep = gen_episode(world, c.seed + static_cast<uint64_t>(i));
    RgbImage f0 = to_rgb(ep.frames[0], world.palette);
    RgbImage f1 = to_rgb(ep.frames[1], world.palette);
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%03d", i);
    fs::path dir = out / name;
    fs::create_directories(dir);
    write_ppm(dir / "f0.ppm", upscale(f0, 8));
    write_ppm(dir / "f1_gt.ppm", upscale(f1, 8));
    mw.write("sample_written", 1.0, "sample", i, static_cast<int64_t>(c.seed),
             {{"dir", name}, {"temperature", temp}});
    (void)reg;
  }
}

void cmd_entropy_reveal(const KvConfig& kv, const Common& c) {
  kv.require_known_keys(with_world({"source", "checkpoint", "rgb_book",
                                    "flow_book", "episodes", "reveal_steps"}));
  auto s = build_stack(kv);
  int episodes = static_cast<int>(kv.get_int("episodes", 4));
  int k = static_cast<int>(kv.get_int("reveal_steps", 1));
  fs::path out(c.out);
  stamp(out, resolved_with_world(kv, s->world), c.seed, "entropy-reveal");

  ProbeContext ctx = s->ctx();
  MetricsWriter mw(out / "metrics.jsonl");
  std::ofstream trace(out / "reveal.jsonl");
  for (int e = 0; e < episodes; ++e) {
    Episode ep = gen_episode(probe_world(s->world), c.seed + static_cast<uint64_t>(e));
    Datum cond = frame_datum(ctx, ep.frames[0], 0);
    Datum truth = frame_datum(ctx, ep.frames[1], 1);
    std::vector<Pointer> queries;
    for (PatchIx p : all_patches(ctx.patches_per_side()))
      queries.push_back(Pointer::rgb(1, p.row, p.col, 0));
    auto steps = max_entropy_reveal(*s->psi, cond, queries, truth, k);
    for (const auto& st : steps) {
      nlohmann::json j{{"episode", e},
                       {"row", st.pointer.row},
                       {"col", st.pointer.col},
                       {"entropy_before", st.entropy_before},
                       {"code", st.revealed}};
      trace << j.dump() << "\n";
    }
    Datum after = cond;
    for (const auto& st : steps) after.insert(st.pointer, st.revealed);
    double residual = 0.0;
    for (double h : entropy_of(*s->psi, after, queries)) residual += h;
    mw.write("residual_entropy", residual, "probe", e,
             static_cast<int64_t>(c.seed));
  }
}

void cmd_probe_flow(const KvConfig& kv, const Common& c) {
  kv.require_known_keys(with_world({"source", "checkpoint", "rgb_book",
                                    "flow_book", "episodes", "n_repeats",
                                    "reveal_fraction", "bump_size", "tol_px"}));
  auto s = build_stack(kv);
  int episodes = static_cast<int>(kv.get_int("episodes", 4));
  KlTraceOptions opts;
  opts.n_repeats = static_cast<int>(kv.get_int("n_repeats", 4));
  opts.reveal_fraction = kv.get_double("reveal_fraction", 0.25);
  opts.bump.size = static_cast<int>(kv.get_int("bump_size", 1));
  double tol = kv.get_double("tol_px", 1.0);
  fs::path out(c.out);
  stamp(out, resolved_with_world(kv, s->world), c.seed, "probe-flow");

  ProbeContext ctx = s->ctx();
  auto patches = all_patches(ctx.patches_per_side());
  MetricsWriter mw(out / "metrics.jsonl");
  double acc_sum = 0.0;
  int acc_n = 0;
  Rng rng(c.seed);
  for (int e = 0; e < episodes; ++e) {
    Episode ep = gen_episode(probe_world(s->world), c.seed + static_cast<uint64_t>(e));
    char name[32];
    std::snprintf(name, sizeof(name), "episode_%03d", e);
    fs::path dir = out / name;
    export_episode(ep, dir);
    FlowProbeResult res =
        kl_trace_flow(ctx, ep.frames[0], ep.frames[1], patches, opts, rng);
    write_flow_arrays(dir, res.u, res.valid);
    write_ppm(dir / "flow_pred.ppm",
              upscale(flow_to_rgb(res.u, &res.valid,
                                  s->world.patch_size * 2.0),
                      16));
    FlowEval ev = eval_flow(res.u, &res.valid, patch_flow(ep, 0), tol);
    mw.write("flow_accuracy", ev.accuracy, "probe", e,
             static_cast<int64_t>(c.seed),
             {{"epe", ev.epe},
              {"compared", ev.compared},
              {"degenerate", ev.degenerate}});
    if (!ev.degenerate) {
      acc_sum += ev.accuracy;
      ++acc_n;
    }
  }
  mw.write("flow_accuracy_mean", acc_n ? acc_sum / acc_n : 0.0, "summary", -1,
           static_cast<int64_t>(c.seed));
}

void cmd_probe_segments(const KvConfig& kv, const Common& c) {
  kv.require_known_keys(with_world({"source", "checkpoint", "rgb_book",
                                    "flow_book", "episodes", "n_samples",
                                    "temperature", "mode", "shifts",
                                    "sprite_id"}));
  auto s = build_stack(kv);
  int episodes = static_cast<int>(kv.get_int("episodes", 4));
  int sprite = static_cast<int>(kv.get_int("sprite_id", 0));
  SegmentOptions opts;
  opts.n_samples = static_cast<int>(kv.get_int("n_samples", 5));
  opts.temperature = kv.get_double("temperature", 1.0);
  opts.mode = kv.get_or("mode", "patch_copy") == "sparse_flow"
                  ? PromptMode::sparse_flow
                  : PromptMode::patch_copy;
  if (kv.has("shifts")) opts.shifts = parse_vec2_list(kv.get("shifts"));
  fs::path out(c.out);
  stamp(out, resolved_with_world(kv, s->world), c.seed, "probe-segments");

  ProbeContext ctx = s->ctx();
  MetricsWriter mw(out / "metrics.jsonl");
  Rng rng(c.seed);
  for (int e = 0; e < episodes; ++e) {
    Episode ep = gen_episode(probe_world(s->world), c.seed + static_cast<uint64_t>(e));
    char name[32];
    std::snprintf(name, sizeof(name), "episode_%03d", e);
    fs::path dir = out / name;
    export_episode(ep, dir);
    auto seed_px = sprite_seed_pixel(ep, 0, sprite);
    if (!seed_px) {
      mw.write("segment_iou", 0.0, "probe", e, static_cast<int64_t>(c.seed),
               {{"degenerate", true}, {"reason", "sprite invisible"}});
      continue;
    }
    SegmentResult res =
        segment_from_hypotheticals(ctx, ep.frames[0], *seed_px, opts, rng);
    std::vector<int16_t> mask(res.patch_mask.data.begin(),
                              res.patch_mask.data.end());
    write_i16_array(dir / "mask_pred", mask,
                    {res.patch_mask.rows, res.patch_mask.cols});
    write_ppm(dir / "mask_overlay.ppm",
              upscale(mask_overlay(to_rgb(ep.frames[0], s->world.palette),
                                   res.pixel_mask),
                      8));
    Grid<uint8_t> gt =
        sprite_patch_mask(ep.segments[0], sprite, s->world.patch_size);
    IouEval ev = eval_mask_iou(res.patch_mask, gt);
    mw.write("segment_iou", ev.iou, "probe", e, static_cast<int64_t>(c.seed),
             {{"degenerate", ev.degenerate || res.degenerate}});
  }
}

void cmd_probe_depth(const KvConfig& kv, const Common& c) {
  kv.require_known_keys(with_world({"source", "checkpoint", "rgb_book",
                                    "flow_book", "episodes", "baseline",
                                    "n_samples", "temperature", "radius"}));
  auto s = build_stack(kv);
  int episodes = static_cast<int>(kv.get_int("episodes", 4));
  DepthOptions opts;
  opts.baseline = static_cast<int>(kv.get_int("baseline", 1));
  opts.n_samples = static_cast<int>(kv.get_int("n_samples", 2));
  opts.temperature = kv.get_double("temperature", 1.0);
  opts.block_match_radius = static_cast<int>(kv.get_int("radius", 5));
  fs::path out(c.out);
  stamp(out, resolved_with_world(kv, s->world), c.seed, "probe-depth");

  ProbeContext ctx = s->ctx();
  MetricsWriter mw(out / "metrics.jsonl");
  Rng rng(c.seed);
  for (int e = 0; e < episodes; ++e) {
    Episode ep = gen_episode(probe_world(s->world), c.seed + static_cast<uint64_t>(e));
    char name[32];
    std::snprintf(name, sizeof(name), "episode_%03d", e);
    fs::path dir = out / name;
    export_episode(ep, dir);
    DepthResult res = depth_from_viewpoint(ctx, ep.frames[0], opts, rng);
    std::vector<int16_t> z, valid;
    for (size_t i = 0; i < res.z.data.size(); ++i) {
      z.push_back(static_cast<int16_t>(std::lround(res.z.data[i])));
      valid.push_back(res.valid.data[i]);
    }
    write_i16_array(dir / "depth_pred", z, {res.z.rows, res.z.cols});
    write_i16_array(dir / "depth_valid", valid, {res.z.rows, res.z.cols});
    write_ppm(dir / "depth_pred.ppm",
              upscale(depth_to_gray(res.z, &res.valid), 16));
    DepthEval ev = eval_depth(res, gt_patch_depth(ep, 0));
    mw.write("depth_spearman", ev.spearman, "probe", e,
             static_cast<int64_t>(c.seed),
             {{"compared", ev.compared}, {"degenerate", ev.degenerate}});
  }
}

void cmd_integrate(const KvConfig& kv, const Common& c) {
  kv.require_known_keys(with_world(
      {"stable_checkpoint", "rgb_book", "flow_book", "mix_ratio", "flow_source",
       "camera_fraction", "extra_stable_steps", "decay_steps", "batch",
       "threads", "weight_decay", "clip_norm", "log_every", "n_repeats",
       "reveal_fraction"}));
  Checkpoint stable = Checkpoint::load(kv.get("stable_checkpoint"));
  WorldConfig world = world_from_checkpoint(stable);
  Codebook rgb_book = Codebook::load(kv.get("rgb_book"));
  Codebook flow_book = Codebook::load(kv.get("flow_book"));
  fs::path out(c.out);
  stamp(out, resolved_with_world(kv, world), c.seed, "integrate");

  MixedDatasetSpec spec;
  spec.mix_ratio = kv.get_double("mix_ratio", 0.5);
  spec.camera_fraction =
      kv.get_double("camera_fraction", stable.camera_fraction);
  std::string source = kv.get_or("flow_source", "ground_truth");
  if (source == "ground_truth") {
    spec.flow_source = FlowTokenSource::ground_truth;
  } else if (source == "extracted") {
    spec.flow_source = FlowTokenSource::extracted;
  } else {
    throw ConfigError("flow_source must be 'ground_truth' or 'extracted'");
  }

  TrainOptions opts;
  opts.batch = static_cast<int>(kv.get_int("batch", 8));
  opts.threads = static_cast<int>(kv.get_int("threads", 4));
  opts.weight_decay = static_cast<float>(kv.get_double("weight_decay", 0.01));
  opts.clip_norm = static_cast<float>(kv.get_double("clip_norm", 1.0));
  opts.log_every = static_cast<int>(kv.get_int("log_every", 10));

  FlowExtractor extractor = nullptr;
  if (spec.flow_source == FlowTokenSource::extracted) {
    // The self-improvement path: flow supervision comes from KL-trace probes
    // run against the stable model itself.
    auto probe_stack = std::make_shared<Stack>();
    probe_stack->ckpt = stable;
    probe_stack->reg = stable.registry;
    probe_stack->vocab = stable.vocab;
    probe_stack->rgb_book = rgb_book;
    probe_stack->world = world;
    probe_stack->psi = std::make_unique<ModelPredictor>(stable);
    KlTraceOptions kopts;
    kopts.n_repeats = static_cast<int>(kv.get_int("n_repeats", 2));
    kopts.reveal_fraction = kv.get_double("reveal_fraction", 0.25);
    extractor = [probe_stack, kopts](const Episode& ep, int step,
                                     Rng& rng) -> ExtractedFlow {
      ProbeContext ctx = probe_stack->ctx();
      KlTraceOptions o = kopts;
      o.from_frame = 0;
      o.to_frame = 1;
      auto patches = all_patches(ctx.patches_per_side());
      FlowProbeResult res = kl_trace_flow(ctx, ep.frames[step],
                                          ep.frames[step + 1], patches, o, rng);
      return ExtractedFlow{res.u, res.valid};
    };
  }

  int extra_stable = static_cast<int>(kv.get_int("extra_stable_steps", 200));
  int decay = static_cast<int>(kv.get_int("decay_steps", 100));
  IntegrationResult res = continue_training(stable, world, rgb_book, flow_book,
                                            spec, extra_stable, decay, opts,
                                            extractor);
  res.ckpt.save(out / "final.ckpt");
  save_loss_csv(out / "loss.csv", res.curve);
  MetricsWriter mw(out / "metrics.jsonl");
  mw.write("integrate_final_loss", res.curve.back().loss, "train",
           res.curve.back().step, static_cast<int64_t>(c.seed));
}

void cmd_predict_flow(const KvConfig& kv, const Common& c) {
  kv.require_known_keys(plain({"checkpoint", "rgb_book", "flow_book",
                               "episodes", "mode", "temperature", "camera",
                               "tol_px"}));
  Checkpoint ckpt = Checkpoint::load(kv.get("checkpoint"));
  if (!is_flow_integrated(ckpt))
    throw CapabilityError("predict-flow needs a flow-integrated checkpoint");
  auto s = std::make_shared<Stack>();
  s->ckpt = ckpt;
  s->reg = ckpt.registry;
  s->vocab = ckpt.vocab;
  s->rgb_book = Codebook::load(kv.get("rgb_book"));
  s->flow_book = Codebook::load(kv.get("flow_book"));
  s->world = world_from_checkpoint(ckpt);
  s->psi = std::make_unique<ModelPredictor>(ckpt);

  int episodes = static_cast<int>(kv.get_int("episodes", 4));
  PredictFlowOptions opts;
  opts.mode = kv.get_or("mode", "sequential") == "parallel"
                  ? SampleMode::parallel
                  : SampleMode::sequential;
  opts.temperature = kv.get_double("temperature", 1.0);
  bool use_camera = kv.get_bool("camera", false);
  double tol = kv.get_double("tol_px", 1.0);
  fs::path out(c.out);
  stamp(out, resolved_with_world(kv, s->world), c.seed, "predict-flow");

  ProbeContext ctx = s->ctx();
  MetricsWriter mw(out / "metrics.jsonl");
  Rng rng(c.seed);
  for (int e = 0; e < episodes; ++e) {
    Episode ep = gen_episode(probe_world(s->world), c.seed + static_cast<uint64_t>(e));
    char name[32];
    std::snprintf(name, sizeof(name), "episode_%03d", e);
    fs::path dir = out / name;
    export_episode(ep, dir);
    PredictFlowOptions o = opts;
    if (use_camera) o.camera = ep.camera_shifts[0];
    FlowProbeResult res = predict_flow(ctx, ep.frames[0], o, rng);
    write_flow_arrays(dir, res.u, res.valid);
    write_ppm(dir / "flow_pred.ppm",
              upscale(flow_to_rgb(res.u, &res.valid,
                                  s->world.patch_size * 2.0),
                      16));
    FlowEval ev = eval_flow(res.u, &res.valid, patch_flow(ep, 0), tol);
    mw.write("flow_accuracy", ev.accuracy, "probe", e,
             static_cast<int64_t>(c.seed),
             {{"epe", ev.epe}, {"degenerate", ev.degenerate}});
  }
}

void cmd_pmotion(const KvConfig& kv, const Common& c) {
  kv.require_known_keys(
      plain({"checkpoint", "rgb_book", "flow_book", "episodes", "eps_px"}));
  Checkpoint ckpt = Checkpoint::load(kv.get("checkpoint"));
  if (!is_flow_integrated(ckpt))
    throw CapabilityError("pmotion needs a flow-integrated checkpoint");
  auto s = std::make_shared<Stack>();
  s->ckpt = ckpt;
  s->reg = ckpt.registry;
  s->vocab = ckpt.vocab;
  s->rgb_book = Codebook::load(kv.get("rgb_book"));
  s->flow_book = Codebook::load(kv.get("flow_book"));
  s->world = world_from_checkpoint(ckpt);
  s->psi = std::make_unique<ModelPredictor>(ckpt);

  int episodes = static_cast<int>(kv.get_int("episodes", 4));
  double eps = kv.get_double("eps_px", 0.5);
  fs::path out(c.out);
  stamp(out, resolved_with_world(kv, s->world), c.seed, "pmotion");

  ProbeContext ctx = s->ctx();
  MetricsWriter mw(out / "metrics.jsonl");
  for (int e = 0; e < episodes; ++e) {
    Episode ep = gen_episode(probe_world(s->world), c.seed + static_cast<uint64_t>(e));
    char name[32];
    std::snprintf(name, sizeof(name), "episode_%03d", e);
    fs::path dir = out / name;
    export_episode(ep, dir);
    PMotionResult res = p_motion_map(ctx, ep.frames[0], eps);
    Grid<Vec2> gt = patch_flow(ep, 0);
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<int16_t> pm;
    for (int i = 0; i < res.p.rows * res.p.cols; ++i) {
      scores.push_back(res.p.data[i]);
      labels.push_back(gt.data[i].norm2_sq() > 0 ? 1 : 0);
      pm.push_back(static_cast<int16_t>(std::lround(res.p.data[i] * 1000)));
    }
    write_i16_array(dir / "pmotion_milli", pm, {res.p.rows, res.p.cols});
    write_ppm(dir / "pmotion.ppm", upscale(depth_to_gray(res.p, nullptr), 16));
    bool both = false;
    int pos = 0;
    for (int l : labels) pos += l;
    both = pos > 0 && pos < static_cast<int>(labels.size());
    mw.write("motion_auc", both ? auc(scores, labels) : -1.0, "probe", e,
             static_cast<int64_t>(c.seed),
             {{"degenerate", !both}, {"eps_warning", res.eps_warning}});
  }
}

void cmd_dependency(const KvConfig& kv, const Common& c) {
  kv.require_known_keys(with_world({"source", "checkpoint", "rgb_book",
                                    "flow_book", "shift", "eps_px", "mask_a",
                                    "mask_b"}));
  auto s = build_stack(kv);
  if (!s->ctx().has_flow())
    throw CapabilityError("dependency scores need a flow-capable predictor");
  Vec2 shift = kv.has("shift") ? parse_vec2_list(kv.get("shift")).at(0)
                               : Vec2{2, 0};
  double eps = kv.get_double("eps_px", 0.5);
  fs::path out(c.out);
  stamp(out, resolved_with_world(kv, s->world), c.seed, "dependency");

  auto patch_list = [&](const Grid<uint8_t>& mask) {
    std::vector<PatchIx> v;
    for (int r = 0; r < mask.rows; ++r)
      for (int cc = 0; cc < mask.cols; ++cc)
        if (mask.at(r, cc)) v.push_back({r, cc});
    return v;
  };
  ProbeContext ctx = s->ctx();
  // A sampled scene can leave the command unexplainable (the commanded shift
  // is wall-blocked from that pose); scan a few seeds for a usable one.
  for (int attempt = 0;; ++attempt) {
    Episode ep =
        gen_episode(probe_world(s->world), c.seed + static_cast<uint64_t>(attempt));
    std::vector<PatchIx> a, b;
    if (kv.has("mask_a") && kv.has("mask_b")) {
      for (Vec2 p : parse_vec2_list(kv.get("mask_a"))) a.push_back({p.y, p.x});
      for (Vec2 p : parse_vec2_list(kv.get("mask_b"))) b.push_back({p.y, p.x});
    } else {
      a = patch_list(sprite_patch_mask(ep.segments[0], 0, s->world.patch_size));
      b = patch_list(sprite_patch_mask(ep.segments[0], 1, s->world.patch_size));
    }
    try {
      if (a.empty() || b.empty())
        throw ProbeFailureError("dependency masks resolved to empty patch sets");
      double d_ab = dependency_score(ctx, ep.frames[0], a, b, shift, eps);
      double d_ba = dependency_score(ctx, ep.frames[0], b, a, shift, eps);
      export_episode(ep, out / "episode_000");
      MetricsWriter mw(out / "metrics.jsonl");
      mw.write("dependency_ab", d_ab, "probe", 0, static_cast<int64_t>(c.seed),
               {{"attempt", attempt}});
      mw.write("dependency_ba", d_ba, "probe", 0, static_cast<int64_t>(c.seed));
      return;
    } catch (const ZeroSupportError&) {
      if (attempt >= 15) throw;
    } catch (const ProbeFailureError&) {
      if (attempt >= 15) throw;
    }
  }
}

void cmd_eval(const KvConfig& kv, const Common& c) {
  kv.require_known_keys(
      plain({"task", "dir", "step", "sprite_id", "tol_px"}));
  std::string task = !c.task.empty() ? c.task : kv.get("task");
  fs::path dir(kv.get("dir"));
  int step = static_cast<int>(kv.get_int("step", 0));
  double tol = kv.get_double("tol_px", 1.0);
  fs::path out(c.out);
  stamp(out, kv, c.seed, "eval");

  Episode ep = import_episode(dir);
  MetricsWriter mw(out / "metrics.jsonl");
  if (task == "flow") {
    I16Array u = read_i16_array(dir / "flow_pred");
    I16Array valid = read_i16_array(dir / "flow_valid");
    if (u.shape.size() != 3 || u.shape[2] != 2)
      throw ShapeError("flow_pred must be [rows, cols, 2]");
    Grid<Vec2> pred(u.shape[0], u.shape[1], Vec2{0, 0});
    Grid<uint8_t> vmask(u.shape[0], u.shape[1], 0);
    for (size_t i = 0; i < pred.data.size(); ++i) {
      pred.data[i] = {u.data[2 * i], u.data[2 * i + 1]};
      vmask.data[i] = valid.data[i] != 0;
    }
    FlowEval ev = eval_flow(pred, &vmask, patch_flow(ep, step), tol);
    mw.write("flow_accuracy", ev.accuracy, "eval", step,
             static_cast<int64_t>(c.seed),
             {{"epe", ev.epe},
              {"compared", ev.compared},
              {"degenerate", ev.degenerate}});
  } else if (task == "segments") {
    int sprite = static_cast<int>(kv.get_int("sprite_id", 0));
    I16Array m = read_i16_array(dir / "mask_pred");
    Grid<uint8_t> pred(m.shape.at(0), m.shape.at(1), 0);
    for (size_t i = 0; i < pred.data.size(); ++i)
      pred.data[i] = m.data[i] != 0;
    IouEval ev = eval_mask_iou(
        pred, sprite_patch_mask(ep.segments[0], sprite, ep.config.patch_size));
    mw.write("segment_iou", ev.iou, "eval", step, static_cast<int64_t>(c.seed),
             {{"degenerate", ev.degenerate}});
  } else if (task == "depth") {
    I16Array z = read_i16_array(dir / "depth_pred");
    I16Array valid = read_i16_array(dir / "depth_valid");
    DepthResult pred;
    pred.z = Grid<double>(z.shape.at(0), z.shape.at(1), 0.0);
    pred.valid = Grid<uint8_t>(z.shape.at(0), z.shape.at(1), 0);
    for (size_t i = 0; i < pred.z.data.size(); ++i) {
      pred.z.data[i] = z.data[i];
      pred.valid.data[i] = valid.data[i] != 0;
    }
    DepthEval ev = eval_depth(pred, gt_patch_depth(ep, 0));
    mw.write("depth_spearman", ev.spearman, "eval", step,
             static_cast<int64_t>(c.seed),
             {{"compared", ev.compared}, {"degenerate", ev.degenerate}});
  } else {
    throw ConfigError("task must be one of flow|segments|depth");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pointer-structured world model toolkit"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* desc;
    void (*fn)(const KvConfig&, const Common&);
    CLI::App* cmd{nullptr};
    Common args;
  };
  static Sub subs[] = {
      {"gen-data", "generate and export episodes", cmd_gen_data, nullptr, {}},
      {"fit-quantizer", "fit rgb/flow codebooks", cmd_fit_quantizer, nullptr, {}},
      {"train", "train a predictor from scratch", cmd_train, nullptr, {}},
      {"sample", "export frames for trained-model inspection", cmd_sample,
       nullptr, {}},
      {"entropy-reveal", "uncertainty maps and max-entropy revelation",
       cmd_entropy_reveal, nullptr, {}},
      {"probe-flow", "optical flow by KL tracing", cmd_probe_flow, nullptr, {}},
      {"probe-segments", "object masks by motion hypotheticals",
       cmd_probe_segments, nullptr, {}},
      {"probe-depth", "depth by viewpoint hypotheticals", cmd_probe_depth,
       nullptr, {}},
      {"integrate", "mix flow tokens and continue training", cmd_integrate,
       nullptr, {}},
      {"predict-flow", "sample the flow-token group", cmd_predict_flow,
       nullptr, {}},
      {"pmotion", "motion-probability and expected-displacement maps",
       cmd_pmotion, nullptr, {}},
      {"dependency", "directional dependency scores", cmd_dependency, nullptr,
       {}},
      {"eval", "metrics from exported predictions", cmd_eval, nullptr, {}},
  };
  for (Sub& s : subs) {
    s.cmd = app.add_subcommand(s.name, s.desc);
    add_common(s.cmd, s.args);
    if (std::string(s.name) == "eval")
      s.cmd->add_option("--task", s.args.task, "flow|segments|depth");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (Sub& s : subs) {
    if (!s.cmd->parsed()) continue;
    try {
      KvConfig kv = KvConfig::parse_file(s.args.config);
      s.fn(kv, s.args);
      return 0;
    } catch (const PsiError& e) {
      nlohmann::json err{{"error", e.what()}, {"exit_code", e.exit_code()}};
      std::cerr << err.dump() << "\n";
      return e.exit_code();
    } catch (const std::exception& e) {
      nlohmann::json err{{"error", e.what()}, {"exit_code", 4}};
      std::cerr << err.dump() << "\n";
      return 4;
    }
  }
  return 2;
}
