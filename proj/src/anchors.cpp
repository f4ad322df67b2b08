#include "sgm3d/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgm3d {

AnchorGrid generate_anchors(const BevGridSpec& spec,
                            const std::vector<AnchorSize>& sizes,
                            const std::vector<double>& rotations) {
  if (sizes.empty() || rotations.empty()) {
    throw std::invalid_argument("generate_anchors: empty sizes or rotations");
  }
  AnchorGrid grid;
  grid.spec = spec;
  grid.sizes = sizes;
  grid.rotations = rotations;
  const int H = spec.rows(), W = spec.cols();
  grid.anchors.reserve(static_cast<std::size_t>(H) * W * sizes.size() *
                       rotations.size());
  const double zc = 0.5 * (spec.z_min + spec.z_max);
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      for (const AnchorSize& s : sizes) {
        for (double rot : rotations) {
          Box3D a;
          a.x = spec.cell_center_x(i);
          a.y = spec.cell_center_y(j);
          a.z = zc;
          a.l = s.l;
          a.w = s.w;
          a.h = s.h;
          a.yaw = rot;
          grid.anchors.push_back(a);
        }
      }
    }
  }
  return grid;
}

Assignment assign_targets(const AnchorGrid& grid,
                          const std::vector<ClassedBox>& gts,
                          const AssignConfig& cfg) {
  const std::size_t n = grid.anchors.size();
  Assignment out;

  std::vector<double> best_iou(n, 0.0);
  std::vector<std::size_t> best_gt(n, 0);
  std::vector<double> gt_best_iou(gts.size(), 0.0);
  std::vector<std::size_t> gt_best_anchor(gts.size(), 0);

  // Localizing candidate anchors around each gt keeps this near-linear;
  // anchor footprints larger than the gt circumradius sum still intersect
  // only within the combined radius.
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const Box3D& gb = gts[g].box;
    double max_anchor_r = 0.0;
    for (const AnchorSize& s : grid.sizes) {
      max_anchor_r = std::max(max_anchor_r, 0.5 * std::hypot(s.l, s.w));
    }
    const double r = 0.5 * std::hypot(gb.l, gb.w) + max_anchor_r;
    const BevGridSpec& spec = grid.spec;
    const int H = spec.rows(), W = spec.cols(), K = grid.per_cell();
    const int i0 = std::max(0, static_cast<int>((gb.x - r - spec.x_min) / spec.cell));
    const int i1 = std::min(H - 1, static_cast<int>((gb.x + r - spec.x_min) / spec.cell));
    const int j0 = std::max(0, static_cast<int>((gb.y - r - spec.y_min) / spec.cell));
    const int j1 = std::min(W - 1, static_cast<int>((gb.y + r - spec.y_min) / spec.cell));
    for (int i = i0; i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) {
        for (int k = 0; k < K; ++k) {
          const std::size_t idx =
              (static_cast<std::size_t>(i) * W + j) * K + k;
          if (grid.class_of(idx) != gts[g].class_id) continue;
          const double iou = iou_bev(grid.anchors[idx], gb);
          if (iou > best_iou[idx]) {
            best_iou[idx] = iou;
            best_gt[idx] = g;
          }
          if (iou > gt_best_iou[g] ||
              (iou == gt_best_iou[g] && iou > 0.0 && idx < gt_best_anchor[g])) {
            gt_best_iou[g] = iou;
            gt_best_anchor[g] = idx;
          }
        }
      }
    }
  }

  std::vector<int> state(n, -1);  // -1 bg, 0 ignored, 1 fg
  for (std::size_t i = 0; i < n; ++i) {
    if (best_iou[i] >= cfg.pos_thresh) {
      state[i] = 1;
    } else if (best_iou[i] <= cfg.neg_thresh) {
      state[i] = -1;
    } else {
      state[i] = 0;
    }
  }
  // Force the best anchor per gt foreground.
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gt_best_iou[g] > 0.0) {
      const std::size_t idx = gt_best_anchor[g];
      state[idx] = 1;
      if (gt_best_iou[g] >= best_iou[idx]) {
        best_iou[idx] = gt_best_iou[g];
        best_gt[idx] = g;
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (state[i] == 1) {
      out.fg.push_back(i);
      const ClassedBox& gt = gts[best_gt[i]];
      AnchorTarget t;
      t.residual = encode_residual(gt.box, grid.anchors[i]);
      t.direction = (gt.box.yaw > 0.0 && gt.box.yaw <= M_PI) ? 1 : 0;
      t.class_id = gt.class_id;
      t.gt_index = best_gt[i];
      out.targets.emplace(i, t);
    } else if (state[i] == -1) {
      out.bg.push_back(i);
    } else {
      out.ignored.push_back(i);
    }
  }
  return out;
}

}  // namespace sgm3d
