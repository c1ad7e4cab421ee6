#include "psi/probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "psi/stats.hpp"

namespace psi {

namespace {

void check_ctx(const ProbeContext& ctx, bool need_flow = false) {
  if (!ctx.psi || !ctx.registry || !ctx.vocab || !ctx.rgb_book || !ctx.palette)
    throw ConfigError("probe context is missing a component");
  if (ctx.patch_size < 1 || ctx.grid_size % ctx.patch_size != 0)
    throw ConfigError("probe context has inconsistent geometry");
  if (need_flow && !ctx.has_flow())
    throw CapabilityError("probe requires a flow-integrated predictor");
}

// Renormalized motion statistics of one flow-token distribution. Mass outside
// the decodable flow span (other modalities, the unknown code) expresses no
// velocity and is dropped before normalizing.
struct FlowStats {
  double p_motion{0.0};
  Vec2d expectation{0.0, 0.0};
  double decodable_mass{0.0};
};

FlowStats flow_stats(const ProbeContext& ctx, const DistVec& dist,
                     double eps_px) {
  const VocabSpan span = ctx.vocab->flow;
  const Code unknown = ctx.vocab->unknown_flow_code();
  FlowStats st;
  double moving = 0.0;
  for (Code c = span.offset; c < span.offset + span.size; ++c) {
    if (c == unknown) continue;
    double p = dist[c];
    if (p <= 0.0) continue;
    Vec2 v = decode_flow(*ctx.flow_book, c);
    st.decodable_mass += p;
    st.expectation.x += p * v.x;
    st.expectation.y += p * v.y;
    if (std::sqrt(static_cast<double>(v.norm2_sq())) > eps_px) moving += p;
  }
  if (st.decodable_mass > 0.0) {
    st.p_motion = moving / st.decodable_mass;
    st.expectation.x /= st.decodable_mass;
    st.expectation.y /= st.decodable_mass;
  }
  return st;
}

}  // namespace

bool ProbeContext::has_flow() const {
  return flow_book != nullptr && registry != nullptr && registry->has_flow();
}

ProbeContext make_probe_context(const Predictor& psi,
                                const ModalityRegistry& reg,
                                const VocabLayout& vocab,
                                const Codebook& rgb_book,
                                const Codebook* flow_book,
                                const WorldConfig& world) {
  if (rgb_book.patch_size() != world.patch_size)
    throw ConfigError("codebook patch size does not match the world");
  if (reg.rows() != world.patches_per_side() ||
      reg.cols() != world.patches_per_side())
    throw ConfigError("registry shape does not match the world");
  ProbeContext ctx;
  ctx.psi = &psi;
  ctx.registry = &reg;
  ctx.vocab = &vocab;
  ctx.rgb_book = &rgb_book;
  ctx.flow_book = flow_book;
  ctx.palette = &world.palette;
  ctx.patch_size = world.patch_size;
  ctx.grid_size = world.grid_size;
  ctx.parallax_k = world.parallax_k;
  return ctx;
}

Datum frame_datum(const ProbeContext& ctx, const Image& frame,
                  int frame_index) {
  check_ctx(ctx);
  if (frame.width != ctx.grid_size || frame.height != ctx.grid_size)
    throw ShapeError("frame size does not match the probe context");
  RgbImage rgb = to_rgb(frame, *ctx.palette);
  Datum d;
  const int pps = ctx.patches_per_side();
  for (int r = 0; r < pps; ++r)
    for (int c = 0; c < pps; ++c) {
      auto codes = ctx.rgb_book->encode_patch(
          patch_vector(rgb, r, c, ctx.patch_size));
      for (int l = 0; l < static_cast<int>(codes.size()); ++l)
        d.insert(Pointer::rgb(frame_index, r, c, l), codes[l]);
    }
  return d;
}

Image perturb_patch(const Image& frame, PatchIx patch, int patch_size,
                    const BumpSpec& bump) {
  Image out = frame;
  if (!bump.enabled) return out;
  if (bump.size < 1 || bump.size > patch_size)
    throw ConfigError("bump size must lie in [1, patch_size]");
  const int x0 = patch.col * patch_size, y0 = patch.row * patch_size;
  const int cx = x0 + patch_size / 2, cy = y0 + patch_size / 2;
  for (int dy = 0; dy < bump.size; ++dy)
    for (int dx = 0; dx < bump.size; ++dx) {
      int x = cx + dx, y = cy + dy;
      if (x >= x0 && x < x0 + patch_size && y >= y0 && y < y0 + patch_size &&
          out.in_bounds(x, y))
        out.at(x, y) = kTracerIndex;
    }
  return out;
}

FlowProbeResult kl_trace_flow(const ProbeContext& ctx, const Image& f0,
                              const Image& f1,
                              std::span<const PatchIx> probe_patches,
                              const KlTraceOptions& opts, Rng& rng) {
  check_ctx(ctx);
  if (opts.reveal_fraction < 0.0 || opts.reveal_fraction >= 1.0)
    throw ConfigError("reveal_fraction must lie in [0, 1)");
  if (opts.n_repeats < 1) throw ConfigError("n_repeats must be >= 1");

  const int pps = ctx.patches_per_side();
  const int n_patches = pps * pps;
  const Datum clean_f0 = frame_datum(ctx, f0, opts.from_frame);
  const Datum truth_f1 = frame_datum(ctx, f1, opts.to_frame);
  const int n_reveal = static_cast<int>(opts.reveal_fraction * n_patches + 0.5);

  FlowProbeResult res;
  res.u = Grid<Vec2>(pps, pps, Vec2{0, 0});
  res.valid = Grid<uint8_t>(pps, pps, 0);
  res.peak_kl = Grid<double>(pps, pps, 0.0);

  // Shared across probe patches within a repeat so perturbed and clean runs
  // see identical revealed sets.
  std::vector<std::vector<int>> reveal_sets(opts.n_repeats);
  std::vector<int> all(n_patches);
  for (int i = 0; i < n_patches; ++i) all[i] = i;
  for (int k = 0; k < opts.n_repeats; ++k) {
    std::vector<int> shuffled = all;
    rng.shuffle(shuffled);
    reveal_sets[k].assign(shuffled.begin(), shuffled.begin() + n_reveal);
    std::sort(reveal_sets[k].begin(), reveal_sets[k].end());
  }

  for (const PatchIx& probe : probe_patches) {
    if (probe.row < 0 || probe.row >= pps || probe.col < 0 || probe.col >= pps)
      throw ShapeError("probe patch outside the grid");
    Image perturbed = perturb_patch(f0, probe, ctx.patch_size, opts.bump);
    Datum pert_f0 = frame_datum(ctx, perturbed, opts.from_frame);

    std::vector<double> kl_sum(n_patches, 0.0);
    std::vector<int> kl_count(n_patches, 0);

    for (int k = 0; k < opts.n_repeats; ++k) {
      Datum reveal;
      std::vector<bool> revealed(n_patches, false);
      for (int idx : reveal_sets[k]) {
        revealed[idx] = true;
        int r = idx / pps, c = idx % pps;
        for (int l = 0; l < ctx.rgb_book->depth(); ++l) {
          Pointer p = Pointer::rgb(opts.to_frame, r, c, l);
          reveal.insert(p, truth_f1.at(p));
        }
      }
      std::vector<Pointer> queries;
      std::vector<int> query_patch;
      for (int idx = 0; idx < n_patches; ++idx) {
        if (revealed[idx]) continue;
        queries.push_back(
            Pointer::rgb(opts.to_frame, idx / pps, idx % pps, 0));
        query_patch.push_back(idx);
      }
      try {
        auto d_pert = ctx.psi->predict_parallel(pert_f0.merged(reveal), queries);
        auto d_clean =
            ctx.psi->predict_parallel(clean_f0.merged(reveal), queries);
        for (size_t q = 0; q < queries.size(); ++q) {
          kl_sum[query_patch[q]] += kl_divergence(d_pert[q], d_clean[q]);
          kl_count[query_patch[q]] += 1;
        }
      } catch (const ZeroSupportError&) {
        // The paint contradicts this repeat's revealed set (e.g. the dot's
        // landing patch was revealed clean); other repeats still count.
        continue;
      }
    }

    int best = -1;
    double best_kl = 0.0;
    for (int idx = 0; idx < n_patches; ++idx) {
      if (kl_count[idx] == 0) continue;
      double kl = kl_sum[idx] / kl_count[idx];
      if (best < 0 || kl > best_kl) {
        best = idx;
        best_kl = kl;
      }
    }
    if (best < 0 || best_kl <= 1e-9) continue;  // dot left no trace
    int br = best / pps, bc = best % pps;
    res.u.at(probe.row, probe.col) = {(bc - probe.col) * ctx.patch_size,
                                      (br - probe.row) * ctx.patch_size};
    res.valid.at(probe.row, probe.col) = 1;
    res.peak_kl.at(probe.row, probe.col) = best_kl;
  }

  bool any_valid = false;
  for (uint8_t v : res.valid.data) any_valid |= v != 0;
  res.degenerate = !any_valid;
  return res;
}

BlockMatchResult block_match_flow(const RgbImage& f0, const RgbImage& f1,
                                  int patch_size, int radius) {
  if (f0.width != f1.width || f0.height != f1.height)
    throw ShapeError("block match frames differ in size");
  if (f0.width % patch_size != 0 || f0.height % patch_size != 0)
    throw ShapeError("frame not divisible into patches");
  if (radius < 0) throw ConfigError("radius must be >= 0");

  const int rows = f0.height / patch_size, cols = f0.width / patch_size;
  BlockMatchResult res;
  res.u = Grid<Vec2>(rows, cols, Vec2{0, 0});
  res.valid = Grid<uint8_t>(rows, cols, 0);

  for (int pr = 0; pr < rows; ++pr)
    for (int pc = 0; pc < cols; ++pc) {
      const int x0 = pc * patch_size, y0 = pr * patch_size;
      long best_ssd = std::numeric_limits<long>::max();
      Vec2 best_u{0, 0};
      int best_ties = 0;
      for (int uy = -radius; uy <= radius; ++uy)
        for (int ux = -radius; ux <= radius; ++ux) {
          if (x0 + ux < 0 || y0 + uy < 0 ||
              x0 + ux + patch_size > f1.width ||
              y0 + uy + patch_size > f1.height)
            continue;
          long ssd = 0;
          for (int dy = 0; dy < patch_size; ++dy)
            for (int dx = 0; dx < patch_size; ++dx) {
              Rgb a = f0.at(x0 + dx, y0 + dy);
              Rgb b = f1.at(x0 + ux + dx, y0 + uy + dy);
              long dr = static_cast<long>(a.r) - b.r;
              long dg = static_cast<long>(a.g) - b.g;
              long db = static_cast<long>(a.b) - b.b;
              ssd += dr * dr + dg * dg + db * db;
            }
          Vec2 u{ux, uy};
          if (ssd < best_ssd) {
            best_ssd = ssd;
            best_u = u;
            best_ties = 1;
          } else if (ssd == best_ssd) {
            best_ties += 1;
            bool closer = u.norm2_sq() < best_u.norm2_sq() ||
                          (u.norm2_sq() == best_u.norm2_sq() &&
                           std::pair(u.x, u.y) < std::pair(best_u.x, best_u.y));
            if (closer) best_u = u;
          }
        }
      if (best_ssd == std::numeric_limits<long>::max()) continue;
      res.u.at(pr, pc) = best_u;
      res.valid.at(pr, pc) = best_ties == 1 ? 1 : 0;
    }
  return res;
}

HypotheticalSample motion_hypothetical(const ProbeContext& ctx,
                                       const Image& f0,
                                       const MotionPrompt& prompt,
                                       double temperature, Rng& rng) {
  check_ctx(ctx, prompt.mode == PromptMode::sparse_flow);
  const int pps = ctx.patches_per_side();
  if (prompt.patch.row < 0 || prompt.patch.row >= pps || prompt.patch.col < 0 ||
      prompt.patch.col >= pps)
    throw ShapeError("prompt patch outside the grid");

  Datum cond = frame_datum(ctx, f0, 0);
  Datum seeded;

  if (prompt.mode == PromptMode::patch_copy) {
    if (prompt.shift_px.x % ctx.patch_size != 0 ||
        prompt.shift_px.y % ctx.patch_size != 0)
      throw ConfigError("patch_copy shift must be patch aligned");
    int tr = prompt.patch.row + prompt.shift_px.y / ctx.patch_size;
    int tc = prompt.patch.col + prompt.shift_px.x / ctx.patch_size;
    if (tr < 0 || tr >= pps || tc < 0 || tc >= pps)
      throw ConfigError("patch_copy command moves the patch off the grid");
    for (int l = 0; l < ctx.rgb_book->depth(); ++l)
      seeded.insert(Pointer::rgb(1, tr, tc, l),
                    cond.at(Pointer::rgb(0, prompt.patch.row, prompt.patch.col, l)));
  } else {
    Code code = encode_flow(*ctx.flow_book, prompt.shift_px).code;
    seeded.insert(Pointer::flow(0, prompt.patch.row, prompt.patch.col), code);
  }

  std::vector<Pointer> targets;
  for (const Pointer& p : ctx.registry->rgb_frame_pointers(1))
    if (!seeded.contains(p)) targets.push_back(p);

  Datum sampled = ctx.psi->sample_sequential(cond.merged(seeded), targets,
                                             temperature, 0, rng);
  HypotheticalSample out;
  out.f1_tokens = sampled;
  for (const auto& [p, v] : seeded)
    if (p.modality == Modality::rgb) out.f1_tokens.insert(p, v);

  std::vector<Code> codes;
  codes.reserve(static_cast<size_t>(pps) * pps * ctx.rgb_book->depth());
  for (int r = 0; r < pps; ++r)
    for (int c = 0; c < pps; ++c)
      for (int l = 0; l < ctx.rgb_book->depth(); ++l)
        codes.push_back(out.f1_tokens.at(Pointer::rgb(1, r, c, l)));
  out.f1_image = decode_frame(*ctx.rgb_book, codes, ctx.grid_size, ctx.grid_size);
  return out;
}

SegmentResult segment_from_hypotheticals(const ProbeContext& ctx,
                                         const Image& f0, Vec2 seed_px,
                                         const SegmentOptions& opts, Rng& rng) {
  check_ctx(ctx, opts.mode == PromptMode::sparse_flow);
  if (opts.n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (!ctx.registry || seed_px.x < 0 || seed_px.x >= ctx.grid_size ||
      seed_px.y < 0 || seed_px.y >= ctx.grid_size)
    throw ShapeError("seed pixel outside the grid");

  const int ps = ctx.patch_size;
  const int pps = ctx.patches_per_side();

  SegmentResult res;
  res.seed = {seed_px.y / ps, seed_px.x / ps};
  std::vector<Vec2> shifts = opts.shifts;
  if (shifts.empty()) {
    // Default commands: axis shifts of one patch, keeping the commanded
    // target on the grid for this seed.
    for (Vec2 s : {Vec2{ps, 0}, Vec2{0, ps}, Vec2{-ps, 0}, Vec2{0, -ps}}) {
      int tr = res.seed.row + s.y / ps, tc = res.seed.col + s.x / ps;
      if (tr >= 0 && tr < pps && tc >= 0 && tc < pps) shifts.push_back(s);
    }
  }
  if (shifts.empty()) throw ConfigError("no in-grid shift for the seed patch");
  res.votes = Grid<int>(pps, pps, 0);
  res.votes_needed = (opts.n_samples + 1) / 2;

  RgbImage f0_rgb = to_rgb(f0, *ctx.palette);
  for (int s = 0; s < opts.n_samples; ++s) {
    Vec2 shift = shifts[s % shifts.size()];
    MotionPrompt prompt{res.seed, shift, opts.mode};
    HypotheticalSample hyp =
        motion_hypothetical(ctx, f0, prompt, opts.temperature, rng);
    int radius = shift.norm_linf() + ps;
    BlockMatchResult bm = block_match_flow(f0_rgb, hyp.f1_image, ps, radius);
    for (int r = 0; r < pps; ++r)
      for (int c = 0; c < pps; ++c) {
        if (!bm.valid.at(r, c)) continue;
        Vec2 diff = bm.u.at(r, c) - shift;
        if (diff.norm_linf() <= 1) res.votes.at(r, c) += 1;
      }
  }

  res.patch_mask = Grid<uint8_t>(pps, pps, 0);
  res.pixel_mask = Image(ctx.grid_size, ctx.grid_size, 0);
  bool any = false;
  for (int r = 0; r < pps; ++r)
    for (int c = 0; c < pps; ++c) {
      if (res.votes.at(r, c) < res.votes_needed) continue;
      res.patch_mask.at(r, c) = 1;
      any = true;
      for (int dy = 0; dy < ps; ++dy)
        for (int dx = 0; dx < ps; ++dx)
          res.pixel_mask.at(c * ps + dx, r * ps + dy) = 1;
    }
  res.degenerate = !any;
  return res;
}

DepthResult depth_from_viewpoint(const ProbeContext& ctx, const Image& f0,
                                 const DepthOptions& opts, Rng& rng) {
  check_ctx(ctx);
  if (!ctx.registry->has_camera())
    throw CapabilityError("depth probe needs a camera-conditioned predictor");
  if (opts.baseline < 1 || opts.baseline > ctx.vocab->camera_max_shift)
    throw ConfigError("baseline outside the camera code range");
  if (opts.n_samples < 1) throw ConfigError("n_samples must be >= 1");

  const int pps = ctx.patches_per_side();
  const Datum f0_datum = frame_datum(ctx, f0, 0);
  RgbImage f0_rgb = to_rgb(f0, *ctx.palette);
  const std::vector<Pointer> f1_targets = ctx.registry->rgb_frame_pointers(1);

  Grid<double> z_sum(pps, pps, 0.0);
  Grid<int> z_count(pps, pps, 0);

  const Vec2 dirs[4] = {{opts.baseline, 0},
                        {-opts.baseline, 0},
                        {0, opts.baseline},
                        {0, -opts.baseline}};
  for (const Vec2& dir : dirs) {
    Datum cond = f0_datum;
    cond.insert(Pointer::camera(0, 0), ctx.vocab->camera_code(dir.x));
    cond.insert(Pointer::camera(0, 1), ctx.vocab->camera_code(dir.y));
    for (int s = 0; s < opts.n_samples; ++s) {
      Datum f1 = ctx.psi->sample_sequential(cond, f1_targets, opts.temperature,
                                            0, rng);
      std::vector<Code> codes;
      for (int r = 0; r < pps; ++r)
        for (int c = 0; c < pps; ++c)
          for (int l = 0; l < ctx.rgb_book->depth(); ++l)
            codes.push_back(f1.at(Pointer::rgb(1, r, c, l)));
      RgbImage f1_img =
          decode_frame(*ctx.rgb_book, codes, ctx.grid_size, ctx.grid_size);
      BlockMatchResult bm =
          block_match_flow(f0_rgb, f1_img, ctx.patch_size,
                           opts.block_match_radius);
      for (int r = 0; r < pps; ++r)
        for (int c = 0; c < pps; ++c) {
          if (!bm.valid.at(r, c)) continue;
          int disp = dir.x != 0 ? std::abs(bm.u.at(r, c).x)
                                : std::abs(bm.u.at(r, c).y);
          if (disp == 0) continue;  // background-range surface, masked
          z_sum.at(r, c) += static_cast<double>(opts.baseline) *
                            ctx.parallax_k / disp;
          z_count.at(r, c) += 1;
        }
    }
  }

  DepthResult res;
  res.z = Grid<double>(pps, pps, 0.0);
  res.valid = Grid<uint8_t>(pps, pps, 0);
  int n_valid = 0;
  for (int r = 0; r < pps; ++r)
    for (int c = 0; c < pps; ++c) {
      if (z_count.at(r, c) == 0) continue;
      res.z.at(r, c) = z_sum.at(r, c) / z_count.at(r, c);
      res.valid.at(r, c) = 1;
      ++n_valid;
    }
  if (n_valid == 0)
    throw ProbeFailureError("every patch masked out in the depth probe");
  res.degenerate = n_valid < pps * pps;
  return res;
}

FlowProbeResult predict_flow(const ProbeContext& ctx, const Image& f0,
                             const PredictFlowOptions& opts, Rng& rng) {
  check_ctx(ctx, true);
  if (opts.step < 0 || opts.step >= ctx.registry->steps())
    throw ShapeError("flow step out of range");

  Datum cond = frame_datum(ctx, f0, 0);
  if (opts.camera) {
    if (!ctx.registry->has_camera())
      throw CapabilityError("camera conditioning without a camera modality");
    cond.insert(Pointer::camera(opts.step, 0),
                ctx.vocab->camera_code(opts.camera->x));
    cond.insert(Pointer::camera(opts.step, 1),
                ctx.vocab->camera_code(opts.camera->y));
  }
  std::vector<Pointer> targets = ctx.registry->flow_step_pointers(opts.step);
  Datum sampled =
      opts.mode == SampleMode::sequential
          ? ctx.psi->sample_sequential(cond, targets, opts.temperature, 0, rng)
          : sample_parallel(*ctx.psi, cond, targets, opts.temperature, 0, rng);

  const int pps = ctx.patches_per_side();
  FlowProbeResult res;
  res.u = Grid<Vec2>(pps, pps, Vec2{0, 0});
  res.valid = Grid<uint8_t>(pps, pps, 0);
  res.peak_kl = Grid<double>(pps, pps, 0.0);
  bool any = false;
  for (int r = 0; r < pps; ++r)
    for (int c = 0; c < pps; ++c) {
      Code code = sampled.at(Pointer::flow(opts.step, r, c));
      if (is_unknown_flow(*ctx.flow_book, code) ||
          !ctx.vocab->flow.contains(code))
        continue;
      res.u.at(r, c) = decode_flow(*ctx.flow_book, code);
      res.valid.at(r, c) = 1;
      any = true;
    }
  res.degenerate = !any;
  return res;
}

HypotheticalSample generate_with_sparse_flow(const ProbeContext& ctx,
                                             const Image& f0,
                                             const SparseFlowCommand& cmd,
                                             double rgb_temperature, Rng& rng) {
  check_ctx(ctx, true);
  if (cmd.pins.empty()) throw ConfigError("sparse flow command has no pins");

  Datum cond = frame_datum(ctx, f0, 0);
  for (const auto& [patch, shift] : cmd.pins) {
    FlowEncodeResult enc = encode_flow(*ctx.flow_book, shift);
    if (enc.saturated)
      throw ConfigError("commanded shift outside the flow codebook hull");
    cond.insert(Pointer::flow(0, patch.row, patch.col), enc.code);
  }

  std::vector<Pointer> flow_targets;
  for (const Pointer& p : ctx.registry->flow_step_pointers(0))
    if (!cond.contains(p)) flow_targets.push_back(p);
  if (!flow_targets.empty()) {
    Datum flow_rest =
        ctx.psi->sample_sequential(cond, flow_targets, 1.0, 0, rng);
    cond = cond.merged(flow_rest);
  }

  std::vector<Pointer> rgb_targets = ctx.registry->rgb_frame_pointers(1);
  Datum f1 = ctx.psi->sample_sequential(cond, rgb_targets, rgb_temperature, 0,
                                        rng);

  HypotheticalSample out;
  out.f1_tokens = f1;
  const int pps = ctx.patches_per_side();
  std::vector<Code> codes;
  for (int r = 0; r < pps; ++r)
    for (int c = 0; c < pps; ++c)
      for (int l = 0; l < ctx.rgb_book->depth(); ++l)
        codes.push_back(f1.at(Pointer::rgb(1, r, c, l)));
  out.f1_image = decode_frame(*ctx.rgb_book, codes, ctx.grid_size, ctx.grid_size);
  return out;
}

PMotionResult p_motion_map(const ProbeContext& ctx, const Image& f0,
                           double eps_px) {
  check_ctx(ctx, true);
  if (eps_px < 0.0) throw ConfigError("eps_px must be >= 0");
  Datum cond = frame_datum(ctx, f0, 0);
  std::vector<Pointer> targets = ctx.registry->flow_step_pointers(0);
  auto dists = ctx.psi->predict_parallel(cond, targets);

  const int pps = ctx.patches_per_side();
  PMotionResult res;
  res.p = Grid<double>(pps, pps, 0.0);
  // Decoded velocities are whole pixels, so thresholds below half a pixel
  // cannot separate codes any further.
  res.eps_warning = eps_px < 0.5;
  size_t i = 0;
  for (int r = 0; r < pps; ++r)
    for (int c = 0; c < pps; ++c)
      res.p.at(r, c) = flow_stats(ctx, dists[i++], eps_px).p_motion;
  return res;
}

Grid<Vec2d> expected_displacement(const ProbeContext& ctx, const Image& f0) {
  check_ctx(ctx, true);
  Datum cond = frame_datum(ctx, f0, 0);
  std::vector<Pointer> targets = ctx.registry->flow_step_pointers(0);
  auto dists = ctx.psi->predict_parallel(cond, targets);

  const int pps = ctx.patches_per_side();
  Grid<Vec2d> out(pps, pps, Vec2d{0.0, 0.0});
  size_t i = 0;
  for (int r = 0; r < pps; ++r)
    for (int c = 0; c < pps; ++c)
      out.at(r, c) = flow_stats(ctx, dists[i++], 0.0).expectation;
  return out;
}

double dependency_score(const ProbeContext& ctx, const Image& f0,
                        std::span<const PatchIx> mask_a,
                        std::span<const PatchIx> mask_b, Vec2 shift,
                        double eps_px) {
  check_ctx(ctx, true);
  if (mask_a.empty() || mask_b.empty())
    throw ConfigError("dependency masks must be non-empty");
  for (const PatchIx& a : mask_a)
    for (const PatchIx& b : mask_b)
      if (a == b) throw ConfigError("dependency masks overlap");

  Datum cond = frame_datum(ctx, f0, 0);
  for (const PatchIx& a : mask_a) {
    FlowEncodeResult enc = encode_flow(*ctx.flow_book, shift);
    if (enc.saturated)
      throw ConfigError("commanded shift outside the flow codebook hull");
    cond.insert(Pointer::flow(0, a.row, a.col), enc.code);
  }
  std::vector<Pointer> targets;
  for (const PatchIx& b : mask_b)
    targets.push_back(Pointer::flow(0, b.row, b.col));
  auto dists = ctx.psi->predict_parallel(cond, targets);

  double total = 0.0;
  for (const DistVec& d : dists) total += flow_stats(ctx, d, eps_px).p_motion;
  return total / static_cast<double>(mask_b.size());
}

}  // namespace psi
