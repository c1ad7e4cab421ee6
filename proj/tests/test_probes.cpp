#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <optional>

#include "psi/dataset.hpp"
#include "psi/metrics.hpp"
#include "psi/oracle.hpp"
#include "psi/probes.hpp"
#include "psi/world_kv.hpp"

using namespace psi;

namespace {

WorldConfig world_from_text(const std::string& text) {
  return world_from_kv(KvConfig::parse_text(text));
}

// One sprite drifting right every step; tracer branches in the prior so
// painted probe dots are explainable.
WorldConfig drift_world(int frames = 2) {
  return world_from_text(
      "grid_size=8\npatch_size=2\nn_sprites=1\nsprite_min=2\nsprite_max=2\n"
      "velocity_set=2:0\npos_step=2\ntracer_prob=0.5\nframes=" +
      std::to_string(frames) + "\n");
}

// One sprite moving one patch in any of the 8 directions.
WorldConfig eight_dir_world() {
  return world_from_text(
      "grid_size=8\npatch_size=2\nn_sprites=1\nsprite_min=2\nsprite_max=2\n"
      "velocity_set=2:0,-2:0,0:2,0:-2,2:2,2:-2,-2:2,-2:-2\npos_step=2\n");
}

// Symmetric two-future mover: flow is certain, direction is not.
WorldConfig two_future_world() {
  return world_from_text(
      "grid_size=8\npatch_size=2\nn_sprites=1\nsprite_min=2\nsprite_max=2\n"
      "velocity_set=2:0,-2:0\npos_step=2\n");
}

// Three static sprites at depths 1/2/4 under a shifting camera.
WorldConfig layered_world() {
  return world_from_text(
      "grid_size=16\npatch_size=4\nn_sprites=3\nsprite_min=4\nsprite_max=4\n"
      "velocity_set=0:0\ndepth_layers=1,2,4\npos_step=4\n"
      "camera_shift_set=0:0,1:0,-1:0,0:1,0:-1\n");
}

// Sprite 1 rides sprite 0 and may add its own slide, so pinning the carrier
// determines the rider but not the other way around.
WorldConfig carry_world() {
  return world_from_text(
      "grid_size=8\npatch_size=2\nn_sprites=2\nsprite_min=2\nsprite_max=2\n"
      "velocity_set=0:0,2:0\ndepth_layers=1,2\npos_step=2\n"
      "coupled_carry=true\nslide_set=0:0,2:0\n");
}

struct ProbeRig {
  WorldConfig world;
  VocabLayout vocab = VocabLayout::standard();
  Codebook rgb_book;
  std::optional<Codebook> flow_book;
  ModalityRegistry reg;
  std::unique_ptr<OracleWorldModel> psi;

  explicit ProbeRig(const WorldConfig& w, bool with_flow = false,
                    uint64_t fit_seed = 5)
      : world(w) {
    FitSamples s = collect_fit_samples(world, 64, fit_seed);
    Rng rng(fit_seed);
    rgb_book =
        fit_rgb_codebook(s.rgb_patches, world.patch_size, 2, vocab, rng);
    reg = ModalityRegistry(RegistryShape{world.frames,
                                         world.patches_per_side(),
                                         world.patches_per_side(),
                                         rgb_book.depth()});
    reg.register_camera();
    if (with_flow) {
      flow_book = fit_flow_codebook(s.flows, vocab, rng);
      reg.register_flow();
    }
    psi = std::make_unique<OracleWorldModel>(world, reg, vocab, rgb_book,
                                             flow_book);
  }

  ProbeContext ctx() const {
    return make_probe_context(*psi, reg, vocab, rgb_book,
                              flow_book ? &*flow_book : nullptr, world);
  }
};

// Fixed latent choices; episodes used for probing carry no tracer paint.
Episode fixed_episode(const WorldConfig& w, std::vector<Sprite> sprites,
                      int steps = 1) {
  WorldState st;
  st.sprites = std::move(sprites);
  return materialize_episode(w, st,
                             std::vector<Vec2>(steps, Vec2{0, 0}), {});
}

std::vector<PatchIx> all_patches(int pps) {
  std::vector<PatchIx> out;
  for (int r = 0; r < pps; ++r)
    for (int c = 0; c < pps; ++c) out.push_back({r, c});
  return out;
}

int nearest_palette(const std::vector<Rgb>& palette, Rgb c) {
  int best = 0;
  long best_d = -1;
  for (size_t i = 0; i < palette.size(); ++i) {
    long dr = static_cast<long>(palette[i].r) - c.r;
    long dg = static_cast<long>(palette[i].g) - c.g;
    long db = static_cast<long>(palette[i].b) - c.b;
    long d = dr * dr + dg * dg + db * db;
    if (best_d < 0 || d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("tracer paint never leaks outside the commanded patch") {
  WorldConfig w = two_future_world();
  Episode ep = fixed_episode(w, {Sprite{{4, 4}, {2, 0}, {2, 2}, 1, 1}});
  const Image& f0 = ep.frames[0];

  Image p = perturb_patch(f0, {1, 1}, w.patch_size);
  int changed = 0;
  for (int y = 0; y < f0.height; ++y)
    for (int x = 0; x < f0.width; ++x) {
      if (p.at(x, y) == f0.at(x, y)) continue;
      ++changed;
      CHECK(p.at(x, y) == kTracerIndex);
      CHECK(x >= 2);
      CHECK(x < 4);
      CHECK(y >= 2);
      CHECK(y < 4);
    }
  CHECK(changed == 1);  // default bump is a single pixel

  // A 2x2 bump grows from the patch center, so on a 2x2 patch it clips to
  // the single center cell; on a 4x4 canvas it covers all four pixels.
  Image p2 = perturb_patch(f0, {1, 1}, w.patch_size, BumpSpec{2, true});
  int changed2 = 0;
  for (size_t i = 0; i < p2.px.size(); ++i) changed2 += p2.px[i] != f0.px[i];
  CHECK(changed2 == 1);
  Image wide(4, 4, 0);
  Image p3 = perturb_patch(wide, {0, 0}, 4, BumpSpec{2, true});
  int changed3 = 0;
  for (size_t i = 0; i < p3.px.size(); ++i) changed3 += p3.px[i] != wide.px[i];
  CHECK(changed3 == 4);

  CHECK(perturb_patch(f0, {1, 1}, w.patch_size, BumpSpec{1, false}) == f0);
  CHECK_THROWS_AS(perturb_patch(f0, {0, 0}, w.patch_size, BumpSpec{3, true}),
                  ConfigError);
}

TEST_CASE("probe plumbing rejects mismatched shapes and options") {
  ProbeRig rig(two_future_world());
  ProbeContext ctx = rig.ctx();
  Episode ep = fixed_episode(rig.world, {Sprite{{4, 4}, {2, 0}, {2, 2}, 1, 1}});

  CHECK_THROWS_AS(frame_datum(ctx, Image(4, 4), 0), ShapeError);

  Rng rng(1);
  KlTraceOptions bad;
  bad.reveal_fraction = 1.0;
  CHECK_THROWS_AS(
      kl_trace_flow(ctx, ep.frames[0], ep.frames[1], all_patches(4), bad, rng),
      ConfigError);
  bad = {};
  bad.n_repeats = 0;
  CHECK_THROWS_AS(
      kl_trace_flow(ctx, ep.frames[0], ep.frames[1], all_patches(4), bad, rng),
      ConfigError);
  std::vector<PatchIx> off{{4, 0}};
  CHECK_THROWS_AS(
      kl_trace_flow(ctx, ep.frames[0], ep.frames[1], off, {}, rng),
      ShapeError);

  WorldConfig wrong = rig.world;
  wrong.patch_size = 4;
  wrong.grid_size = 16;
  CHECK_THROWS_AS(make_probe_context(*rig.psi, rig.reg, rig.vocab,
                                     rig.rgb_book, nullptr, wrong),
                  ConfigError);
}

TEST_CASE("kl tracing reads the sprite's displacement off the posterior") {
  ProbeRig rig(drift_world());
  Episode ep = fixed_episode(rig.world, {Sprite{{4, 4}, {2, 0}, {2, 2}, 1, 1}});
  Grid<Vec2> gt = patch_flow(ep, 0);

  Rng rng(11);
  FlowProbeResult res = kl_trace_flow(rig.ctx(), ep.frames[0], ep.frames[1],
                                      all_patches(4), {}, rng);
  CHECK(!res.degenerate);
  FlowEval ev = eval_flow(res.u, &res.valid, gt, 0.5);
  CHECK(!ev.degenerate);
  CHECK(ev.compared >= 12);  // a few abstentions from reveal collisions are fine
  CHECK(ev.accuracy == 1.0);
  REQUIRE(res.valid.at(2, 2) == 1);
  CHECK(res.u.at(2, 2) == Vec2{2, 0});
  CHECK(res.peak_kl.at(2, 2) > 0.0);
}

TEST_CASE("kl tracing composes displacements across two steps") {
  ProbeRig rig(drift_world(3));
  Episode ep =
      fixed_episode(rig.world, {Sprite{{0, 4}, {2, 0}, {2, 2}, 1, 1}}, 2);

  KlTraceOptions opts;
  opts.from_frame = 0;
  opts.to_frame = 2;
  std::vector<PatchIx> probes{{2, 0}, {0, 3}};
  Rng rng(3);
  FlowProbeResult res =
      kl_trace_flow(rig.ctx(), ep.frames[0], ep.frames[2], probes, opts, rng);

  // Two steps of (2,0) compose to (4,0); the background patch stays put.
  Grid<Vec2> f0f = patch_flow(ep, 0);
  Grid<Vec2> f1f = patch_flow(ep, 1);
  Vec2 hop = f0f.at(2, 0);
  Vec2 composed = hop + f1f.at(2, 0 + hop.x / rig.world.patch_size);
  CHECK(composed == Vec2{4, 0});
  REQUIRE(res.valid.at(2, 0) == 1);
  CHECK(res.u.at(2, 0) == composed);
  if (res.valid.at(0, 3)) CHECK(res.u.at(0, 3) == Vec2{0, 0});
}

TEST_CASE("an episode that already carries paint defeats tracing") {
  // The probe dot must be the only intervention: with a second, pre-existing
  // dot in f0 no single-tracer world explains the perturbed frame.
  ProbeRig rig(drift_world());
  WorldConfig painted = rig.world;
  painted.tracer_prob = 1.0;
  Episode ep = gen_episode(painted, 7);

  PatchIx dot{-1, -1};
  for (int y = 0; y < ep.frames[0].height; ++y)
    for (int x = 0; x < ep.frames[0].width; ++x)
      if (ep.frames[0].at(x, y) == kTracerIndex)
        dot = {y / painted.patch_size, x / painted.patch_size};
  REQUIRE(dot.row >= 0);

  PatchIx far{dot.row >= 2 ? 0 : 3, dot.col >= 2 ? 0 : 3};
  Rng rng(2);
  FlowProbeResult res = kl_trace_flow(rig.ctx(), ep.frames[0], ep.frames[1],
                                      std::vector<PatchIx>{far}, {}, rng);
  CHECK(res.degenerate);
  CHECK(res.valid.at(far.row, far.col) == 0);
}

TEST_CASE("block matching reports unique displacements only") {
  RgbImage f0(8, 8), f1(8, 8);
  const Rgb block[4] = {{10, 0, 0}, {0, 10, 0}, {0, 0, 10}, {10, 10, 0}};
  auto paint = [&](RgbImage& img, int x0, int y0) {
    img.set(x0, y0, block[0]);
    img.set(x0 + 1, y0, block[1]);
    img.set(x0, y0 + 1, block[2]);
    img.set(x0 + 1, y0 + 1, block[3]);
  };
  paint(f0, 2, 2);
  paint(f1, 4, 2);

  BlockMatchResult bm = block_match_flow(f0, f1, 2, 3);
  CHECK(bm.valid.at(1, 1) == 1);
  CHECK(bm.u.at(1, 1) == Vec2{2, 0});
  // Uniform patches match everywhere: flagged invalid, displacement pinned to
  // the closest candidate.
  CHECK(bm.valid.at(0, 0) == 0);
  CHECK(bm.u.at(0, 0) == Vec2{0, 0});

  // Two exact copies tie; the reported u is the lexicographically smaller of
  // the equally near candidates and the flag stays down.
  RgbImage f2(8, 8);
  paint(f2, 4, 2);
  paint(f2, 2, 4);
  BlockMatchResult tie = block_match_flow(f0, f2, 2, 3);
  CHECK(tie.valid.at(1, 1) == 0);
  CHECK(tie.u.at(1, 1) == Vec2{0, 2});

  CHECK_THROWS_AS(block_match_flow(f0, RgbImage(6, 6), 2, 1), ShapeError);
  CHECK_THROWS_AS(block_match_flow(f0, f1, 3, 1), ShapeError);
  CHECK_THROWS_AS(block_match_flow(f0, f1, 2, -1), ConfigError);
}

TEST_CASE("patch-copy hypotheticals realize the commanded motion") {
  ProbeRig rig(drift_world());
  Episode ep = fixed_episode(rig.world, {Sprite{{4, 4}, {2, 0}, {2, 2}, 1, 1}});
  ProbeContext ctx = rig.ctx();

  Rng rng(5);
  MotionPrompt prompt{{2, 2}, {2, 0}, PromptMode::patch_copy};
  HypotheticalSample hyp = motion_hypothetical(ctx, ep.frames[0], prompt, 0.0, rng);
  // The sprite's codes were seeded one patch right; the sampled world model
  // fills the rest consistently, so the sprite shows up at x=6..7.
  CHECK(nearest_palette(rig.world.palette, hyp.f1_image.at(6, 4)) == 1);
  CHECK(nearest_palette(rig.world.palette, hyp.f1_image.at(7, 5)) == 1);
  CHECK(nearest_palette(rig.world.palette, hyp.f1_image.at(4, 4)) == 0);

  MotionPrompt misaligned{{2, 2}, {1, 0}, PromptMode::patch_copy};
  CHECK_THROWS_AS(motion_hypothetical(ctx, ep.frames[0], misaligned, 0.0, rng),
                  ConfigError);
  MotionPrompt off{{2, 0}, {-2, 0}, PromptMode::patch_copy};
  CHECK_THROWS_AS(motion_hypothetical(ctx, ep.frames[0], off, 0.0, rng),
                  ConfigError);
  // Commanding motion the prior forbids leaves no consistent completion.
  MotionPrompt backwards{{2, 2}, {-2, 0}, PromptMode::patch_copy};
  CHECK_THROWS_AS(motion_hypothetical(ctx, ep.frames[0], backwards, 0.0, rng),
                  ZeroSupportError);
}

TEST_CASE("motion hypotheticals cut the mover out of the background") {
  ProbeRig rig(eight_dir_world());
  Episode ep = fixed_episode(rig.world, {Sprite{{2, 2}, {2, 0}, {2, 2}, 1, 1}});
  Grid<uint8_t> gt = sprite_patch_mask(ep.segments[0], 0, rig.world.patch_size);

  SegmentOptions opts;
  opts.n_samples = 5;
  Rng rng(17);
  SegmentResult res =
      segment_from_hypotheticals(rig.ctx(), ep.frames[0], {3, 3}, opts, rng);

  CHECK(res.votes_needed == 3);
  CHECK(res.seed == PatchIx{1, 1});
  CHECK(!res.degenerate);
  CHECK(eval_mask_iou(res.patch_mask, gt).iou == 1.0);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          CHECK(res.pixel_mask.at(c * 2 + dx, r * 2 + dy) ==
                res.patch_mask.at(r, c));
}

TEST_CASE("segmentation still works from a corner seed") {
  // Only the two inward default shifts survive the grid filter.
  ProbeRig rig(eight_dir_world());
  Episode ep = fixed_episode(rig.world, {Sprite{{0, 0}, {2, 0}, {2, 2}, 1, 1}});
  Grid<uint8_t> gt = sprite_patch_mask(ep.segments[0], 0, rig.world.patch_size);

  SegmentOptions opts;
  opts.n_samples = 5;
  Rng rng(23);
  SegmentResult res =
      segment_from_hypotheticals(rig.ctx(), ep.frames[0], {0, 0}, opts, rng);
  CHECK(eval_mask_iou(res.patch_mask, gt).iou == 1.0);
}

TEST_CASE("viewpoint hypotheticals order surfaces by true depth") {
  ProbeRig rig(layered_world());
  Episode ep = fixed_episode(rig.world, {Sprite{{0, 0}, {0, 0}, {4, 4}, 1, 1},
                                         Sprite{{8, 4}, {0, 0}, {4, 4}, 2, 2},
                                         Sprite{{4, 8}, {0, 0}, {4, 4}, 3, 4}});

  DepthOptions opts;
  opts.n_samples = 1;
  Rng rng(9);
  DepthResult res = depth_from_viewpoint(rig.ctx(), ep.frames[0], opts, rng);

  // Disparities 4/2/1 px at z = 1/2/4 with k = 4; background parallax rounds
  // to zero and is masked.
  CHECK(res.valid.at(0, 0) == 1);
  CHECK(res.z.at(0, 0) == doctest::Approx(1.0));
  CHECK(res.valid.at(1, 2) == 1);
  CHECK(res.z.at(1, 2) == doctest::Approx(2.0));
  CHECK(res.valid.at(2, 1) == 1);
  CHECK(res.z.at(2, 1) == doctest::Approx(4.0));
  CHECK(res.valid.at(3, 3) == 0);
  CHECK(res.degenerate);  // background patches carry no depth signal

  Grid<int16_t> maj = patch_majority(ep.depth[0], rig.world.patch_size);
  Grid<double> gt_z(4, 4, 0.0);
  for (size_t i = 0; i < maj.data.size(); ++i)
    gt_z.data[i] = static_cast<double>(maj.data[i]);
  DepthEval ev = eval_depth(res, gt_z);
  CHECK(ev.compared == 3);
  CHECK(ev.spearman == doctest::Approx(1.0));

  DepthOptions bad;
  bad.baseline = 9;
  CHECK_THROWS_AS(depth_from_viewpoint(rig.ctx(), ep.frames[0], bad, rng),
                  ConfigError);

  // Without camera pointers there is no way to command a viewpoint.
  ModalityRegistry bare(RegistryShape{2, 4, 4, rig.rgb_book.depth()});
  OracleWorldModel psi2(rig.world, bare, rig.vocab, rig.rgb_book);
  ProbeContext ctx2 = make_probe_context(psi2, bare, rig.vocab, rig.rgb_book,
                                         nullptr, rig.world);
  CHECK_THROWS_AS(depth_from_viewpoint(ctx2, ep.frames[0], opts, rng),
                  CapabilityError);
}

TEST_CASE("flow-token statistics separate movers from background") {
  ProbeRig rig(two_future_world(), /*with_flow=*/true);
  Episode ep = fixed_episode(rig.world, {Sprite{{4, 4}, {2, 0}, {2, 2}, 1, 1}});
  ProbeContext ctx = rig.ctx();

  PMotionResult pm = p_motion_map(ctx, ep.frames[0], 0.5);
  CHECK(!pm.eps_warning);
  CHECK(pm.p.at(2, 2) == doctest::Approx(1.0));
  CHECK(pm.p.at(0, 0) == doctest::Approx(0.0));

  // The two futures cancel exactly in expectation while motion mass is full:
  // expectation alone cannot expose the mover, probability mass can.
  Grid<Vec2d> ed = expected_displacement(ctx, ep.frames[0]);
  CHECK(ed.at(2, 2).x == doctest::Approx(0.0));
  CHECK(ed.at(2, 2).y == doctest::Approx(0.0));

  CHECK(p_motion_map(ctx, ep.frames[0], 0.25).eps_warning);
  CHECK_THROWS_AS(p_motion_map(ctx, ep.frames[0], -1.0), ConfigError);

  ProbeRig no_flow(two_future_world());
  CHECK_THROWS_AS(p_motion_map(no_flow.ctx(), ep.frames[0], 0.5),
                  CapabilityError);
}

TEST_CASE("direct flow readout matches ground truth in both modes") {
  ProbeRig rig(drift_world(), /*with_flow=*/true);
  WorldConfig probe_world = rig.world;
  probe_world.tracer_prob = 0.0;
  Episode ep =
      fixed_episode(probe_world, {Sprite{{2, 4}, {2, 0}, {2, 2}, 1, 1}});
  Grid<Vec2> gt = patch_flow(ep, 0);
  ProbeContext ctx = rig.ctx();

  Rng rng(13);
  for (SampleMode mode : {SampleMode::sequential, SampleMode::parallel}) {
    PredictFlowOptions opts;
    opts.mode = mode;
    FlowProbeResult res = predict_flow(ctx, ep.frames[0], opts, rng);
    CHECK(!res.degenerate);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        REQUIRE(res.valid.at(r, c) == 1);
        CHECK(res.u.at(r, c) == gt.at(r, c));
      }
  }

  PredictFlowOptions bad;
  bad.step = 1;
  CHECK_THROWS_AS(predict_flow(ctx, ep.frames[0], bad, rng), ShapeError);
}

TEST_CASE("pinned flow tokens steer generation") {
  ProbeRig rig(carry_world(), /*with_flow=*/true);
  Episode ep = fixed_episode(rig.world, {Sprite{{0, 0}, {0, 0}, {2, 2}, 1, 1},
                                         Sprite{{2, 4}, {0, 0}, {2, 2}, 2, 2}});
  ProbeContext ctx = rig.ctx();

  SparseFlowCommand cmd;
  cmd.pins = {{PatchIx{0, 0}, Vec2{2, 0}}};
  Rng rng(19);
  HypotheticalSample hyp =
      generate_with_sparse_flow(ctx, ep.frames[0], cmd, 0.0, rng);
  // The carrier was commanded one patch right: its color must appear there
  // and vanish from its old cell.
  CHECK(nearest_palette(rig.world.palette, hyp.f1_image.at(2, 0)) == 1);
  CHECK(nearest_palette(rig.world.palette, hyp.f1_image.at(3, 1)) == 1);
  CHECK(nearest_palette(rig.world.palette, hyp.f1_image.at(0, 0)) == 0);

  SparseFlowCommand none;
  CHECK_THROWS_AS(generate_with_sparse_flow(ctx, ep.frames[0], none, 0.0, rng),
                  ConfigError);
  SparseFlowCommand huge;
  huge.pins = {{PatchIx{0, 0}, Vec2{50, 50}}};
  CHECK_THROWS_AS(generate_with_sparse_flow(ctx, ep.frames[0], huge, 0.0, rng),
                  ConfigError);
}

TEST_CASE("dependency scores expose who carries whom") {
  ProbeRig rig(carry_world(), /*with_flow=*/true);
  Episode ep = fixed_episode(rig.world, {Sprite{{0, 0}, {0, 0}, {2, 2}, 1, 1},
                                         Sprite{{2, 4}, {0, 0}, {2, 2}, 2, 2}});
  ProbeContext ctx = rig.ctx();

  std::vector<PatchIx> a{{0, 0}};  // carrier
  std::vector<PatchIx> b{{2, 1}};  // rider
  std::vector<PatchIx> bg{{3, 3}};

  // Forcing the carrier drags the rider along every time; forcing the rider
  // leaves the carrier's motion a coin flip (the slide could explain it).
  CHECK(dependency_score(ctx, ep.frames[0], a, b, {2, 0}, 0.5) ==
        doctest::Approx(1.0));
  CHECK(dependency_score(ctx, ep.frames[0], b, a, {2, 0}, 0.5) ==
        doctest::Approx(0.5));
  CHECK(dependency_score(ctx, ep.frames[0], a, bg, {2, 0}, 0.5) ==
        doctest::Approx(0.0));

  CHECK_THROWS_AS(dependency_score(ctx, ep.frames[0], a, a, {2, 0}, 0.5),
                  ConfigError);
  CHECK_THROWS_AS(
      dependency_score(ctx, ep.frames[0], {}, b, {2, 0}, 0.5), ConfigError);
}

TEST_CASE("segmentation can command motion through flow pins") {
  ProbeRig rig(eight_dir_world(), /*with_flow=*/true);
  Episode ep = fixed_episode(rig.world, {Sprite{{4, 2}, {0, 2}, {2, 2}, 1, 1}});
  Grid<uint8_t> gt = sprite_patch_mask(ep.segments[0], 0, rig.world.patch_size);

  SegmentOptions opts;
  opts.n_samples = 5;
  opts.mode = PromptMode::sparse_flow;
  Rng rng(29);
  SegmentResult res =
      segment_from_hypotheticals(rig.ctx(), ep.frames[0], {5, 3}, opts, rng);
  CHECK(eval_mask_iou(res.patch_mask, gt).iou == 1.0);
}
