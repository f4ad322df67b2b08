#pragma once

#include <cstddef>
#include <vector>

namespace sgm3d {

/// Oriented 3D box in the BEV world frame: x forward, y lateral (left
/// positive), z up. The footprint is an l-by-w rectangle rotated by yaw
/// around the vertical axis; l runs along the heading when yaw == 0.
struct Box3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double l = 1.0;
  double w = 1.0;
  double h = 1.0;
  double yaw = 0.0;
};

/// SECOND-style normalized offsets between a box and its anchor:
/// (dx, dy, dz, dl, dw, dh, dyaw).
struct ResidualVector {
  double v[7] = {0, 0, 0, 0, 0, 0, 0};

  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }
};

/// Wraps an angle into [-pi, pi].
double normalize_angle(double a);

ResidualVector encode_residual(const Box3D& gt, const Box3D& anchor);
Box3D decode_residual(const ResidualVector& res, const Box3D& anchor);

/// Corners of the BEV footprint, counter-clockwise.
std::vector<std::pair<double, double>> bev_corners(const Box3D& b);

/// IoU of the two rotated BEV footprints via polygon clipping.
double iou_bev(const Box3D& a, const Box3D& b);

/// BEV intersection area times vertical overlap over the volume union.
double iou_3d(const Box3D& a, const Box3D& b);

/// Greedy NMS on BEV IoU. Returns kept indices in descending score order;
/// score ties break toward the lower original index.
std::vector<std::size_t> nms_bev(const std::vector<Box3D>& boxes,
                                 const std::vector<double>& scores,
                                 double iou_thresh);

}  // namespace sgm3d
