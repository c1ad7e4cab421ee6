#include "psi/dataset.hpp"

namespace psi {

EpisodeTokens tokenize_episode(const Episode& ep, const Codebook& rgb_book,
                               const Codebook* flow_book,
                               const VocabLayout& vocab) {
  EpisodeTokens t;
  for (const Image& frame : ep.frames)
    t.rgb.push_back(encode_frame(rgb_book, to_rgb(frame, ep.config.palette)));
  for (Vec2 shift : ep.camera_shifts)
    t.camera.push_back({vocab.camera_code(shift.x), vocab.camera_code(shift.y)});
  if (flow_book) {
    for (int s = 0; s < static_cast<int>(ep.flow.size()); ++s) {
      Grid<Vec2> pf = patch_flow(ep, s);
      std::vector<Code> codes;
      codes.reserve(pf.size());
      for (const Vec2& v : pf.data)
        codes.push_back(encode_flow(*flow_book, v).code);
      t.flow.push_back(std::move(codes));
    }
  }
  return t;
}

Datum rgb_frame_datum(const EpisodeTokens& t, const ModalityRegistry& reg,
                      int frame) {
  if (frame < 0 || frame >= static_cast<int>(t.rgb.size()))
    throw ShapeError("rgb_frame_datum: frame out of range");
  const int depth = reg.rgb_depth();
  const auto& codes = t.rgb[frame];
  if (codes.size() != static_cast<size_t>(reg.rows()) * reg.cols() * depth)
    throw ShapeError("rgb token count does not match the registry");
  Datum d;
  size_t i = 0;
  for (int r = 0; r < reg.rows(); ++r)
    for (int c = 0; c < reg.cols(); ++c)
      for (int l = 0; l < depth; ++l)
        d.insert(Pointer::rgb(frame, r, c, l), codes[i++]);
  return d;
}

Datum camera_step_datum(const EpisodeTokens& t, const ModalityRegistry& reg,
                        int step) {
  if (step < 0 || step >= static_cast<int>(t.camera.size()))
    throw ShapeError("camera_step_datum: step out of range");
  if (!reg.has_camera())
    throw VocabularyError("registry has no camera modality");
  Datum d;
  d.insert(Pointer::camera(step, 0), t.camera[step][0]);
  d.insert(Pointer::camera(step, 1), t.camera[step][1]);
  return d;
}

Datum flow_step_datum(const EpisodeTokens& t, const ModalityRegistry& reg,
                      int step) {
  if (step < 0 || step >= static_cast<int>(t.flow.size()))
    throw ShapeError("flow_step_datum: step out of range");
  if (!reg.has_flow()) throw VocabularyError("registry has no flow modality");
  Datum d;
  size_t i = 0;
  for (int r = 0; r < reg.rows(); ++r)
    for (int c = 0; c < reg.cols(); ++c)
      d.insert(Pointer::flow(step, r, c), t.flow[step][i++]);
  return d;
}

Datum encode_frame_datum(const RgbImage& frame, const Codebook& rgb_book,
                         const ModalityRegistry& reg, int frame_index) {
  if (frame_index < 0 || frame_index >= reg.frames())
    throw ShapeError("encode_frame_datum: frame out of range");
  Datum d;
  for (int r = 0; r < reg.rows(); ++r)
    for (int c = 0; c < reg.cols(); ++c) {
      auto codes =
          rgb_book.encode_patch(patch_vector(frame, r, c, rgb_book.patch_size()));
      for (int l = 0; l < static_cast<int>(codes.size()); ++l)
        d.insert(Pointer::rgb(frame_index, r, c, l), codes[l]);
    }
  return d;
}

SequenceSampler make_sampler(const DatasetSpec& spec, const Codebook& rgb_book,
                             const Codebook* flow_book,
                             const ModalityRegistry& reg,
                             const VocabLayout& vocab,
                             FlowExtractor extractor) {
  spec.world.validate();
  if (spec.camera_fraction < 0.0 || spec.camera_fraction > 1.0 ||
      spec.flow_fraction < 0.0 || spec.flow_fraction > 1.0)
    throw ConfigError("group fractions must lie in [0, 1]");
  if (spec.camera_fraction > 0.0 && !reg.has_camera())
    throw ConfigError("camera groups requested but registry lacks camera");
  if (spec.include_flow && !reg.has_flow())
    throw ConfigError("flow groups requested but registry lacks flow");
  if (spec.include_flow && !flow_book)
    throw ConfigError("flow groups requested without a flow codebook");
  if (spec.flow_source == FlowTokenSource::extracted && spec.include_flow &&
      !extractor)
    throw ConfigError("extracted flow source needs an extractor");

  // Captured by value: the sampler owns its configuration.
  WorldConfig world = spec.world;
  double cam_frac = spec.camera_fraction;
  bool include_flow = spec.include_flow;
  double flow_frac = spec.flow_fraction;
  FlowTokenSource source = spec.flow_source;
  Codebook rgb = rgb_book;
  std::optional<Codebook> flow =
      flow_book ? std::optional<Codebook>(*flow_book) : std::nullopt;
  ModalityRegistry registry = reg;
  VocabLayout layout = vocab;
  FlowExtractor extract = std::move(extractor);

  return [=](Rng& rng) -> TokenSequence {
    uint64_t episode_seed = rng.next_u64();
    bool with_camera = cam_frac > 0.0 && rng.bernoulli(cam_frac);
    bool with_flow = include_flow && rng.bernoulli(flow_frac);

    Episode ep = gen_episode(world, episode_seed);
    EpisodeTokens toks =
        tokenize_episode(ep, rgb, flow ? &*flow : nullptr, layout);

    if (with_flow && source == FlowTokenSource::extracted) {
      toks.flow.clear();
      for (int s = 0; s < registry.steps(); ++s) {
        ExtractedFlow ex = extract(ep, s, rng);
        if (ex.u.rows != registry.rows() || ex.u.cols != registry.cols())
          throw ShapeError("extractor returned a wrong-shaped flow field");
        std::vector<Code> codes;
        codes.reserve(ex.u.size());
        for (int r = 0; r < ex.u.rows; ++r)
          for (int c = 0; c < ex.u.cols; ++c)
            codes.push_back(ex.valid.at(r, c)
                                ? encode_flow(*flow, ex.u.at(r, c)).code
                                : layout.unknown_flow_code());
        toks.flow.push_back(std::move(codes));
      }
    }

    std::vector<LayoutGroup> groups;
    for (int f = 0; f < registry.frames(); ++f) {
      groups.push_back({rgb_frame_datum(toks, registry, f), GroupOrder::random});
      if (f < registry.steps()) {
        if (with_camera)
          groups.push_back(
              {camera_step_datum(toks, registry, f), GroupOrder::random});
        if (with_flow)
          groups.push_back(
              {flow_step_datum(toks, registry, f), GroupOrder::random});
      }
    }
    return build_layout(groups, registry, rng);
  };
}

FitSamples collect_fit_samples(const WorldConfig& cfg, int n_episodes,
                               uint64_t seed) {
  if (n_episodes < 1) throw ConfigError("need at least one fitting episode");
  FitSamples out;
  Rng rng(seed);
  for (int e = 0; e < n_episodes; ++e) {
    Episode ep = gen_episode(cfg, rng.next_u64());
    const int pps = cfg.patches_per_side();
    for (const Image& frame : ep.frames) {
      RgbImage rgb = to_rgb(frame, cfg.palette);
      for (int r = 0; r < pps; ++r)
        for (int c = 0; c < pps; ++c) {
          auto v = patch_vector(rgb, r, c, cfg.patch_size);
          out.rgb_patches.insert(out.rgb_patches.end(), v.begin(), v.end());
        }
    }
    for (int s = 0; s < static_cast<int>(ep.flow.size()); ++s) {
      Grid<Vec2> pf = patch_flow(ep, s);
      out.flows.insert(out.flows.end(), pf.data.begin(), pf.data.end());
    }
  }
  return out;
}

}  // namespace psi
