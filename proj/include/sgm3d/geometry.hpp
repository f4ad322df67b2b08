#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sgm3d/boxes.hpp"

namespace sgm3d {

/// Pinhole camera. Pixel coordinates follow the image convention
/// (u right, v down); the camera frame is x right, y down, z forward.
struct CameraIntrinsics {
  double f_u = 1.0;
  double f_v = 1.0;
  double c_u = 0.0;
  double c_v = 0.0;
  double baseline = 0.0;  // 0 for mono
};

/// Points in the camera frame.
struct PointCloud {
  std::vector<double> xs, ys, zs;

  std::size_t size() const { return xs.size(); }
  void push_back(double x, double y, double z) {
    xs.push_back(x);
    ys.push_back(y);
    zs.push_back(z);
  }
};

/// Discretization of the BEV plane shared by both branches.
/// x is forward, y lateral, z vertical (world/BEV frame).
struct BevGridSpec {
  double x_min = 0.0, x_max = 70.4;
  double y_min = -40.0, y_max = 40.0;
  double z_min = -3.0, z_max = 1.0;
  double cell = 0.32;

  int rows() const { return static_cast<int>(std::ceil((x_max - x_min) / cell)); }
  int cols() const { return static_cast<int>(std::ceil((y_max - y_min) / cell)); }

  double cell_center_x(int i) const { return x_min + (i + 0.5) * cell; }
  double cell_center_y(int j) const { return y_min + (j + 0.5) * cell; }

  /// Cell index for a BEV-frame point, or -1 when out of range
  /// (in all three axes).
  int cell_index(double x, double y, double z) const;
};

struct BevFeatureMap {
  int channels = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> v;  // channel-major, then row-major

  BevFeatureMap() = default;
  BevFeatureMap(int c, int h, int w)
      : channels(c), rows(h), cols(w), v(static_cast<std::size_t>(c) * h * w, 0.0) {}

  double& at(int c, int i, int j) {
    return v[(static_cast<std::size_t>(c) * rows + i) * cols + j];
  }
  double at(int c, int i, int j) const {
    return v[(static_cast<std::size_t>(c) * rows + i) * cols + j];
  }
};

struct BevMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> v;

  BevMask() = default;
  BevMask(int h, int w) : rows(h), cols(w), v(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols + j]; }
  std::uint8_t at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols + j]; }

  std::size_t count() const;
};

/// Per-pixel categorical distribution over depth bins for an
/// hf-by-wf feature grid. Uniform bin spacing over [near, far].
struct DepthDistribution {
  int bins = 0;
  int hf = 0;
  int wf = 0;
  double near = 2.0;
  double far = 60.0;
  std::vector<double> p;  // (pixel-major): p[(v*wf+u)*bins + b]

  DepthDistribution() = default;
  DepthDistribution(int d, int h, int w, double near_m, double far_m)
      : bins(d), hf(h), wf(w), near(near_m), far(far_m),
        p(static_cast<std::size_t>(d) * h * w, 0.0) {}

  double& prob(int v, int u, int b) {
    return p[(static_cast<std::size_t>(v) * wf + u) * bins + b];
  }
  double prob(int v, int u, int b) const {
    return p[(static_cast<std::size_t>(v) * wf + u) * bins + b];
  }
  double bin_center(int b) const {
    return near + (b + 0.5) * (far - near) / bins;
  }
  /// Bin index holding depth d, clamped to [0, bins).
  int bin_of(double d) const;
};

struct DepthRasterView {
  int width = 0;
  int height = 0;
  const float* values = nullptr;  // row-major, 0 = invalid
};

/// BEV-frame coordinates of a camera-frame point:
/// forward = z_cam, lateral = -x_cam, up = -y_cam.
inline void camera_to_bev(double xc, double yc, double zc, double& xb,
                          double& yb, double& zb) {
  xb = zc;
  yb = -xc;
  zb = -yc;
}

inline void bev_to_camera(double xb, double yb, double zb, double& xc,
                          double& yc, double& zc) {
  xc = -yb;
  yc = -zb;
  zc = xb;
}

/// Pseudo-LiDAR unprojection. Pixels with the zero depth sentinel are
/// skipped. Output points are in the camera frame.
PointCloud unproject_depth(const DepthRasterView& depth,
                           const CameraIntrinsics& cam);

/// Lifts image features into BEV space: frustum feature at (pixel, bin) is
/// feats(pixel) * prob(pixel, bin), placed at the BEV cell of the
/// unprojected (pixel, bin-center-depth) point and accumulated by sum.
/// image_feats layout: channel-major over the hf-by-wf grid.
BevFeatureMap lift_frustum(const std::vector<double>& image_feats, int channels,
                           const DepthDistribution& dist,
                           const CameraIntrinsics& cam, const BevGridSpec& spec);

/// BEV cell index per (pixel, bin), -1 when the lifted point falls outside
/// the grid. Shared by lift_frustum and its backward pass.
std::vector<int> frustum_cell_table(const DepthDistribution& dist,
                                    const CameraIntrinsics& cam,
                                    const BevGridSpec& spec);

/// Cell is foreground iff its center lies inside the rotated footprint of
/// any ground-truth box whose range overlaps the grid.
BevMask foreground_mask(const std::vector<Box3D>& gts, const BevGridSpec& spec);

}  // namespace sgm3d
