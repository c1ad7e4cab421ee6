#include "psi/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "psi/detail/binary.hpp"

namespace psi {

int LevelTable::nearest(std::span<const float> v) const {
  if (static_cast<int>(v.size()) != dim)
    throw ShapeError("nearest: dim mismatch");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < size; ++i) {
    const float* c = centroids.data() + static_cast<size_t>(i) * dim;
    double d = 0.0;
    for (int k = 0; k < dim; ++k) {
      double diff = static_cast<double>(v[k]) - c[k];
      d += diff * diff;
    }
    if (d < best_d) {  // strict: ties keep the lowest index
      best_d = d;
      best = i;
    }
  }
  return best;
}

Codebook::Codebook(Modality modality, int patch_size,
                   std::vector<LevelTable> levels)
    : modality_(modality), patch_size_(patch_size), levels_(std::move(levels)) {
  if (levels_.empty() || levels_.size() > 4)
    throw ConfigError("codebook depth must be 1..4");
}

std::vector<float> downsample2(std::span<const float> patch, int patch_size) {
  if (patch_size == 1) return {patch.begin(), patch.end()};
  if (patch_size % 2 != 0)
    throw ConfigError("patch_size must be even (or 1) for downsampling");
  int half = patch_size / 2;
  std::vector<float> out(static_cast<size_t>(half) * half * 3, 0.0f);
  for (int y = 0; y < patch_size; ++y)
    for (int x = 0; x < patch_size; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        size_t src = (static_cast<size_t>(y) * patch_size + x) * 3 + ch;
        size_t dst = (static_cast<size_t>(y / 2) * half + x / 2) * 3 + ch;
        out[dst] += patch[src] * 0.25f;
      }
  return out;
}

std::vector<float> upsample2(std::span<const float> coarse, int patch_size) {
  if (patch_size == 1) return {coarse.begin(), coarse.end()};
  int half = patch_size / 2;
  if (coarse.size() != static_cast<size_t>(half) * half * 3)
    throw ShapeError("upsample2 input size mismatch");
  std::vector<float> out(static_cast<size_t>(patch_size) * patch_size * 3);
  for (int y = 0; y < patch_size; ++y)
    for (int x = 0; x < patch_size; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        size_t src = (static_cast<size_t>(y / 2) * half + x / 2) * 3 + ch;
        size_t dst = (static_cast<size_t>(y) * patch_size + x) * 3 + ch;
        out[dst] = coarse[src];
      }
  return out;
}

std::vector<Code> Codebook::encode_patch(std::span<const float> patch) const {
  const size_t full = static_cast<size_t>(patch_size_) * patch_size_ * 3;
  if (patch.size() != full) throw ShapeError("encode_patch size mismatch");
  std::vector<Code> codes;
  codes.reserve(levels_.size());

  std::vector<float> recon(full, 0.0f);
  for (size_t l = 0; l < levels_.size(); ++l) {
    const LevelTable& table = levels_[l];
    int idx;
    if (l == 0) {
      auto coarse = downsample2(patch, patch_size_);
      idx = table.nearest(coarse);
      auto up = upsample2(table.centroid(idx), patch_size_);
      for (size_t i = 0; i < full; ++i) recon[i] += up[i];
    } else {
      std::vector<float> residual(full);
      for (size_t i = 0; i < full; ++i) residual[i] = patch[i] - recon[i];
      idx = table.nearest(residual);
      auto c = table.centroid(idx);
      for (size_t i = 0; i < full; ++i) recon[i] += c[i];
    }
    codes.push_back(static_cast<Code>(table.span.offset + idx));
  }
  return codes;
}

std::vector<float> Codebook::decode_patch(std::span<const Code> codes,
                                          int prefix) const {
  if (prefix < 1 || prefix > static_cast<int>(codes.size()) ||
      codes.size() > levels_.size())
    throw ShapeError("decode_patch: bad code count");
  const size_t full = static_cast<size_t>(patch_size_) * patch_size_ * 3;
  std::vector<float> recon(full, 0.0f);
  for (int l = 0; l < prefix; ++l) {
    const LevelTable& table = levels_[l];
    if (!table.span.contains(codes[l]) ||
        codes[l] >= table.span.offset + table.size)
      throw VocabularyError("code outside level span");
    int idx = codes[l] - table.span.offset;
    if (l == 0) {
      auto up = upsample2(table.centroid(idx), patch_size_);
      for (size_t i = 0; i < full; ++i) recon[i] += up[i];
    } else {
      auto c = table.centroid(idx);
      for (size_t i = 0; i < full; ++i) recon[i] += c[i];
    }
  }
  for (float& f : recon) f = std::clamp(f, 0.0f, 255.0f);
  return recon;
}

namespace {

// Distinct sample points with multiplicities, in lexicographic order.
std::vector<std::vector<float>> distinct_points(std::span<const float> samples,
                                                int dim) {
  std::map<std::vector<float>, int> uniq;
  const size_t n = samples.size() / dim;
  for (size_t i = 0; i < n; ++i) {
    std::vector<float> v(samples.begin() + i * dim,
                         samples.begin() + (i + 1) * dim);
    uniq[v] += 1;
  }
  std::vector<std::vector<float>> out;
  out.reserve(uniq.size());
  for (auto& [v, cnt] : uniq) out.push_back(v);
  return out;
}

}  // namespace

KMeansResult kmeans(std::span<const float> samples, int dim, int k, int iters,
                    Rng& rng) {
  if (dim <= 0 || k <= 0) throw ConfigError("kmeans: bad dim/k");
  if (samples.size() % dim != 0) throw ShapeError("kmeans: ragged samples");
  const size_t n = samples.size() / dim;
  if (n == 0) throw FittingError("kmeans: no samples");

  auto uniq = distinct_points(samples, dim);
  KMeansResult res;
  res.size = k;
  res.centroids.assign(static_cast<size_t>(k) * dim, 0.0f);

  if (static_cast<int>(uniq.size()) <= k) {
    // Exact regime: centroids are the distinct points (sorted), padded by
    // repeating the last so every index is populated.
    for (int i = 0; i < k; ++i) {
      const auto& src = uniq[std::min<size_t>(i, uniq.size() - 1)];
      std::copy(src.begin(), src.end(),
                res.centroids.begin() + static_cast<size_t>(i) * dim);
    }
    return res;
  }

  auto point = [&](size_t i) {
    return std::span<const float>(samples.data() + i * dim,
                                  static_cast<size_t>(dim));
  };
  auto dist2 = [&](std::span<const float> a, const float* b) {
    double d = 0.0;
    for (int t = 0; t < dim; ++t) {
      double diff = static_cast<double>(a[t]) - b[t];
      d += diff * diff;
    }
    return d;
  };

  // k-means++ seeding.
  std::vector<float> cent(static_cast<size_t>(k) * dim);
  size_t first = rng.uniform_u64(n);
  std::copy(point(first).begin(), point(first).end(), cent.begin());
  std::vector<double> d2(n);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int cc = 0; cc < c; ++cc)
        best = std::min(best,
                        dist2(point(i), cent.data() + static_cast<size_t>(cc) * dim));
      d2[i] = best;
      total += best;
    }
    size_t chosen;
    if (total <= 0.0) {
      chosen = rng.uniform_u64(n);
    } else {
      double r = rng.uniform() * total;
      double acc = 0.0;
      chosen = n - 1;
      for (size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (r < acc) {
          chosen = i;
          break;
        }
      }
    }
    std::copy(point(chosen).begin(), point(chosen).end(),
              cent.begin() + static_cast<size_t>(c) * dim);
  }

  std::vector<int> assign(n, 0);
  for (int it = 0; it < iters; ++it) {
    bool moved = false;
    for (size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        double d = dist2(point(i), cent.data() + static_cast<size_t>(c) * dim);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        moved = true;
      }
    }
    std::vector<double> sum(static_cast<size_t>(k) * dim, 0.0);
    std::vector<int> count(k, 0);
    for (size_t i = 0; i < n; ++i) {
      count[assign[i]] += 1;
      auto pt = point(i);
      for (int t = 0; t < dim; ++t)
        sum[static_cast<size_t>(assign[i]) * dim + t] += pt[t];
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] == 0) continue;  // dead centroid keeps its position
      for (int t = 0; t < dim; ++t)
        cent[static_cast<size_t>(c) * dim + t] =
            static_cast<float>(sum[static_cast<size_t>(c) * dim + t] / count[c]);
    }
    if (!moved && it > 0) break;
  }

  res.centroids = std::move(cent);
  return res;
}

Codebook fit_rgb_codebook(std::span<const float> patches, int patch_size,
                          int depth, const VocabLayout& vocab, Rng& rng) {
  if (depth < 1 || depth > static_cast<int>(vocab.rgb_levels.size()))
    throw ConfigError("rgb depth out of range");
  const int full_dim = patch_size * patch_size * 3;
  if (patches.size() % full_dim != 0)
    throw ShapeError("fit: ragged patch samples");
  const size_t n = patches.size() / full_dim;
  size_t total_centroids = 0;
  for (int l = 0; l < depth; ++l) total_centroids += vocab.rgb_levels[l].size;
  if (n * 10 < total_centroids)
    throw FittingError("need at least 10 samples per centroid");

  std::vector<LevelTable> levels;
  // Running residuals at full resolution, updated level by level.
  std::vector<float> residual(patches.begin(), patches.end());

  for (int l = 0; l < depth; ++l) {
    const VocabSpan span = vocab.rgb_levels[l];
    LevelTable table;
    table.span = span;
    if (l == 0) {
      int half = patch_size == 1 ? 1 : patch_size / 2;
      table.dim = half * half * 3;
      std::vector<float> coarse;
      coarse.reserve(n * table.dim);
      for (size_t i = 0; i < n; ++i) {
        auto c = downsample2(
            std::span<const float>(patches.data() + i * full_dim,
                                   static_cast<size_t>(full_dim)),
            patch_size);
        coarse.insert(coarse.end(), c.begin(), c.end());
      }
      auto km = kmeans(coarse, table.dim, span.size, 25, rng);
      table.size = km.size;
      table.centroids = std::move(km.centroids);
      for (size_t i = 0; i < n; ++i) {
        std::span<const float> cv(coarse.data() + i * table.dim,
                                  static_cast<size_t>(table.dim));
        int idx = table.nearest(cv);
        auto up = upsample2(table.centroid(idx), patch_size);
        for (int t = 0; t < full_dim; ++t)
          residual[i * full_dim + t] -= up[t];
      }
    } else {
      table.dim = full_dim;
      auto km = kmeans(residual, full_dim, span.size, 25, rng);
      table.size = km.size;
      table.centroids = std::move(km.centroids);
      for (size_t i = 0; i < n; ++i) {
        std::span<const float> rv(residual.data() + i * full_dim,
                                  static_cast<size_t>(full_dim));
        int idx = table.nearest(rv);
        auto c = table.centroid(idx);
        for (int t = 0; t < full_dim; ++t)
          residual[i * full_dim + t] -= c[t];
      }
    }
    levels.push_back(std::move(table));
  }
  return Codebook(Modality::rgb, patch_size, std::move(levels));
}

Codebook fit_flow_codebook(std::span<const Vec2> flows,
                           const VocabLayout& vocab, Rng& rng) {
  if (flows.empty()) throw FittingError("no flow samples");
  std::vector<float> samples;
  samples.reserve(flows.size() * 2);
  for (Vec2 v : flows) {
    samples.push_back(static_cast<float>(v.x));
    samples.push_back(static_cast<float>(v.y));
  }
  LevelTable table;
  table.span = vocab.flow;
  table.dim = 2;
  auto km = kmeans(samples, 2, vocab.flow_table_size(), 25, rng);
  table.size = km.size;  // the final span slot stays reserved for unknown
  table.centroids = std::move(km.centroids);
  return Codebook(Modality::flow, 1, {std::move(table)});
}

FlowEncodeResult encode_flow(const Codebook& flow_book, Vec2 v) {
  const LevelTable& t = flow_book.level(0);
  float fx = static_cast<float>(v.x), fy = static_cast<float>(v.y);
  float lo_x = t.centroids[0], hi_x = t.centroids[0];
  float lo_y = t.centroids[1], hi_y = t.centroids[1];
  for (int i = 0; i < t.size; ++i) {
    lo_x = std::min(lo_x, t.centroids[2 * i]);
    hi_x = std::max(hi_x, t.centroids[2 * i]);
    lo_y = std::min(lo_y, t.centroids[2 * i + 1]);
    hi_y = std::max(hi_y, t.centroids[2 * i + 1]);
  }
  FlowEncodeResult res;
  res.saturated = fx < lo_x || fx > hi_x || fy < lo_y || fy > hi_y;
  std::array<float, 2> q{fx, fy};
  res.code = static_cast<Code>(t.span.offset + t.nearest(q));
  return res;
}

Vec2 decode_flow(const Codebook& flow_book, Code c) {
  const LevelTable& t = flow_book.level(0);
  if (c == static_cast<Code>(t.span.offset + t.span.size - 1))
    throw VocabularyError("cannot decode the unknown-flow code");
  if (!t.span.contains(c) || c >= t.span.offset + t.size)
    throw VocabularyError("code outside flow span");
  auto cv = t.centroid(c - t.span.offset);
  auto rnd = [](float f) {
    return static_cast<int>(f >= 0 ? f + 0.5f : f - 0.5f);
  };
  return {rnd(cv[0]), rnd(cv[1])};
}

bool is_unknown_flow(const Codebook& flow_book, Code c) {
  const VocabSpan& s = flow_book.level(0).span;
  return c == static_cast<Code>(s.offset + s.size - 1);
}

std::vector<Code> encode_frame(const Codebook& book, const RgbImage& frame) {
  const int p = book.patch_size();
  if (frame.width % p != 0 || frame.height % p != 0)
    throw ShapeError("frame not divisible into patches");
  std::vector<Code> codes;
  codes.reserve(static_cast<size_t>(frame.width / p) * (frame.height / p) *
                book.depth());
  for (int r = 0; r < frame.height / p; ++r)
    for (int c = 0; c < frame.width / p; ++c) {
      auto v = patch_vector(frame, r, c, p);
      auto pc = book.encode_patch(v);
      codes.insert(codes.end(), pc.begin(), pc.end());
    }
  return codes;
}

RgbImage decode_frame(const Codebook& book, std::span<const Code> codes,
                      int width, int height) {
  const int p = book.patch_size();
  const int rows = height / p, cols = width / p;
  if (codes.size() != static_cast<size_t>(rows) * cols * book.depth())
    throw ShapeError("decode_frame: code count mismatch");
  RgbImage out(width, height);
  size_t i = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      std::span<const Code> pc(codes.data() + i,
                               static_cast<size_t>(book.depth()));
      i += book.depth();
      paste_patch(out, r, c, p, book.decode_patch(pc));
    }
  return out;
}

void Codebook::save(const std::filesystem::path& path) const {
  auto os = detail::open_out(path);
  detail::write_bytes(os, "HLQK", 4);
  detail::write_pod<uint16_t>(os, 1);  // format version
  detail::write_pod<uint8_t>(os, static_cast<uint8_t>(modality_));
  detail::write_pod<uint8_t>(os, static_cast<uint8_t>(levels_.size()));
  detail::write_pod<uint16_t>(os, static_cast<uint16_t>(patch_size_));
  for (const LevelTable& t : levels_) {
    detail::write_pod<uint16_t>(os, t.span.offset);
    detail::write_pod<uint16_t>(os, t.span.size);
    detail::write_pod<uint32_t>(os, static_cast<uint32_t>(t.size));
    detail::write_pod<uint32_t>(os, static_cast<uint32_t>(t.dim));
    detail::write_bytes(os, t.centroids.data(),
                        t.centroids.size() * sizeof(float));
  }
  if (!os) throw IoError("codebook write failed: " + path.string());
}

Codebook Codebook::load(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  detail::expect_magic(is, "HLQK");
  uint16_t version = detail::read_pod<uint16_t>(is);
  if (version != 1) throw IoError("unsupported codebook version");
  auto modality = static_cast<Modality>(detail::read_pod<uint8_t>(is));
  uint8_t depth = detail::read_pod<uint8_t>(is);
  uint16_t patch = detail::read_pod<uint16_t>(is);
  std::vector<LevelTable> levels;
  for (int l = 0; l < depth; ++l) {
    LevelTable t;
    t.span.offset = detail::read_pod<uint16_t>(is);
    t.span.size = detail::read_pod<uint16_t>(is);
    t.size = static_cast<int>(detail::read_pod<uint32_t>(is));
    t.dim = static_cast<int>(detail::read_pod<uint32_t>(is));
    t.centroids.resize(static_cast<size_t>(t.size) * t.dim);
    detail::read_bytes(is, t.centroids.data(),
                       t.centroids.size() * sizeof(float));
    levels.push_back(std::move(t));
  }
  return Codebook(modality, patch, std::move(levels));
}

}  // namespace psi
