#include "psi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "psi/error.hpp"
#include "psi/stats.hpp"

namespace psi {

FlowEval eval_flow(const Grid<Vec2>& pred, const Grid<uint8_t>* pred_valid,
                   const Grid<Vec2>& gt, double tol_px) {
  if (pred.rows != gt.rows || pred.cols != gt.cols)
    throw ShapeError("flow eval grids differ in shape");
  if (pred_valid && (pred_valid->rows != pred.rows || pred_valid->cols != pred.cols))
    throw ShapeError("flow eval validity mask differs in shape");
  FlowEval ev;
  double epe_sum = 0.0;
  int hits = 0;
  for (int r = 0; r < pred.rows; ++r)
    for (int c = 0; c < pred.cols; ++c) {
      if (pred_valid && !pred_valid->at(r, c)) continue;
      Vec2 d = pred.at(r, c) - gt.at(r, c);
      double epe = std::sqrt(static_cast<double>(d.norm2_sq()));
      epe_sum += epe;
      if (epe <= tol_px) ++hits;
      ++ev.compared;
    }
  if (ev.compared == 0) {
    ev.degenerate = true;
    return ev;
  }
  ev.accuracy = static_cast<double>(hits) / ev.compared;
  ev.epe = epe_sum / ev.compared;
  return ev;
}

IouEval eval_mask_iou(const Grid<uint8_t>& pred, const Grid<uint8_t>& gt) {
  if (pred.rows != gt.rows || pred.cols != gt.cols)
    throw ShapeError("mask iou grids differ in shape");
  int inter = 0, uni = 0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    bool a = pred.data[i] != 0, b = gt.data[i] != 0;
    inter += a && b;
    uni += a || b;
  }
  if (uni == 0) return {1.0, true};
  return {static_cast<double>(inter) / uni, false};
}

DepthEval eval_depth(const DepthResult& pred, const Grid<double>& gt_z) {
  if (pred.z.rows != gt_z.rows || pred.z.cols != gt_z.cols)
    throw ShapeError("depth eval grids differ in shape");
  std::vector<double> a, b;
  for (int r = 0; r < pred.z.rows; ++r)
    for (int c = 0; c < pred.z.cols; ++c) {
      if (!pred.valid.at(r, c)) continue;
      a.push_back(pred.z.at(r, c));
      b.push_back(gt_z.at(r, c));
    }
  DepthEval ev;
  ev.compared = static_cast<int>(a.size());
  if (ev.compared < 2) {
    ev.degenerate = true;
    return ev;
  }
  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(),
                       [&](double x) { return x == v.front(); });
  };
  if (constant(a) || constant(b)) {
    ev.degenerate = true;  // a constant ranking has no order to correlate
    return ev;
  }
  ev.spearman = spearman(a, b);
  return ev;
}

template <typename T>
Grid<T> patch_majority(const Grid<T>& pixel_grid, int patch_size) {
  if (patch_size < 1 || pixel_grid.rows % patch_size != 0 ||
      pixel_grid.cols % patch_size != 0)
    throw ShapeError("grid not divisible into patches");
  const int rows = pixel_grid.rows / patch_size;
  const int cols = pixel_grid.cols / patch_size;
  Grid<T> out(rows, cols, T{});
  for (int pr = 0; pr < rows; ++pr)
    for (int pc = 0; pc < cols; ++pc) {
      std::map<T, int> counts;
      for (int dy = 0; dy < patch_size; ++dy)
        for (int dx = 0; dx < patch_size; ++dx)
          counts[pixel_grid.at(pr * patch_size + dy, pc * patch_size + dx)] += 1;
      T best{};
      int best_n = -1;
      for (const auto& [v, n] : counts)
        if (n > best_n) {  // map order is ascending, so ties keep the smallest
          best = v;
          best_n = n;
        }
      out.at(pr, pc) = best;
    }
  return out;
}

template Grid<uint8_t> patch_majority(const Grid<uint8_t>&, int);
template Grid<int16_t> patch_majority(const Grid<int16_t>&, int);
template Grid<int> patch_majority(const Grid<int>&, int);

Grid<uint8_t> sprite_patch_mask(const Grid<uint8_t>& segments, int sprite_id,
                                int patch_size) {
  // Segment grids encode sprite i as value i+1, background as 0.
  Grid<uint8_t> maj = patch_majority(segments, patch_size);
  Grid<uint8_t> mask(maj.rows, maj.cols, 0);
  for (size_t i = 0; i < maj.data.size(); ++i)
    mask.data[i] = maj.data[i] == static_cast<uint8_t>(sprite_id + 1) ? 1 : 0;
  return mask;
}

}  // namespace psi
