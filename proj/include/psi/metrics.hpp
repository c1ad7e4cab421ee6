#pragma once

#include "psi/probes.hpp"
#include "psi/world.hpp"

namespace psi {

// Degenerate cases never abort a sweep: they carry a flag and a defined
// value (empty-vs-empty IoU = 1.0).

struct FlowEval {
  double accuracy{0.0};  // fraction of compared patches within tol
  double epe{0.0};       // mean endpoint error over compared patches
  int compared{0};
  bool degenerate{false};  // nothing compared
};

FlowEval eval_flow(const Grid<Vec2>& pred, const Grid<uint8_t>* pred_valid,
                   const Grid<Vec2>& gt, double tol_px);

struct IouEval {
  double iou{0.0};
  bool degenerate{false};  // both masks empty (iou fixed at 1.0)
};

IouEval eval_mask_iou(const Grid<uint8_t>& pred, const Grid<uint8_t>& gt);

struct DepthEval {
  double spearman{0.0};
  int compared{0};
  bool degenerate{false};  // fewer than 2 unmasked patches
};

DepthEval eval_depth(const DepthResult& pred, const Grid<double>& gt_z);

// Majority value of each patch_size x patch_size block; ties take the
// smallest value.
template <typename T>
Grid<T> patch_majority(const Grid<T>& pixel_grid, int patch_size);

// Patch-level sprite mask (1 where the majority owner is sprite_id).
Grid<uint8_t> sprite_patch_mask(const Grid<uint8_t>& segments, int sprite_id,
                                int patch_size);

}  // namespace psi
