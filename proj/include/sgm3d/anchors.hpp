#pragma once

#include <unordered_map>
#include <vector>

#include "sgm3d/boxes.hpp"
#include "sgm3d/geometry.hpp"

namespace sgm3d {

struct AnchorSize {
  double l = 3.9;
  double w = 1.6;
  double h = 1.56;
  int class_id = 1;  // 0 is background
};

/// Dense anchor set over the BEV grid: one anchor per
/// (cell, size, rotation). Flat index = (i * W + j) * K + k with
/// k = size_idx * |rotations| + rot_idx.
struct AnchorGrid {
  BevGridSpec spec;
  std::vector<AnchorSize> sizes;
  std::vector<double> rotations;
  std::vector<Box3D> anchors;

  int per_cell() const {
    return static_cast<int>(sizes.size() * rotations.size());
  }
  int class_of(std::size_t index) const {
    return sizes[(index % per_cell()) / rotations.size()].class_id;
  }
};

struct AnchorTarget {
  ResidualVector residual;
  int direction = 0;  // 1 iff gt yaw in (0, pi]
  int class_id = 1;
  std::size_t gt_index = 0;
};

struct Assignment {
  std::vector<std::size_t> fg;
  std::vector<std::size_t> bg;
  std::vector<std::size_t> ignored;
  std::unordered_map<std::size_t, AnchorTarget> targets;
};

struct AssignConfig {
  double pos_thresh = 0.6;
  double neg_thresh = 0.45;
};

struct ClassedBox {
  Box3D box;
  int class_id = 1;
};

AnchorGrid generate_anchors(const BevGridSpec& spec,
                            const std::vector<AnchorSize>& sizes,
                            const std::vector<double>& rotations);

/// Per anchor: max BEV IoU against same-class ground truth. iou >= pos ->
/// foreground, iou <= neg -> background, else ignored; the best anchor of
/// each ground truth is forced foreground when its IoU > 0. Ties break
/// toward the lower anchor index.
Assignment assign_targets(const AnchorGrid& grid,
                          const std::vector<ClassedBox>& gts,
                          const AssignConfig& cfg = {});

}  // namespace sgm3d
