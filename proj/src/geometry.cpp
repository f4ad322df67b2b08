#include "sgm3d/geometry.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace sgm3d {

int BevGridSpec::cell_index(double x, double y, double z) const {
  if (x < x_min || x >= x_max || y < y_min || y >= y_max || z < z_min ||
      z > z_max) {
    return -1;
  }
  const int i = static_cast<int>((x - x_min) / cell);
  const int j = static_cast<int>((y - y_min) / cell);
  if (i < 0 || i >= rows() || j < 0 || j >= cols()) return -1;
  return i * cols() + j;
}

std::size_t BevMask::count() const {
  return static_cast<std::size_t>(
      std::accumulate(v.begin(), v.end(), std::size_t{0}));
}

int DepthDistribution::bin_of(double d) const {
  const double t = (d - near) / (far - near) * bins;
  int b = static_cast<int>(t);
  return std::clamp(b, 0, bins - 1);
}

PointCloud unproject_depth(const DepthRasterView& depth,
                           const CameraIntrinsics& cam) {
  PointCloud cloud;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const double z = depth.values[static_cast<std::size_t>(v) * depth.width + u];
      if (z <= 0.0) continue;
      cloud.push_back((u - cam.c_u) * z / cam.f_u, (v - cam.c_v) * z / cam.f_v,
                      z);
    }
  }
  return cloud;
}

std::vector<int> frustum_cell_table(const DepthDistribution& dist,
                                    const CameraIntrinsics& cam,
                                    const BevGridSpec& spec) {
  std::vector<int> table(static_cast<std::size_t>(dist.hf) * dist.wf * dist.bins);
  std::size_t idx = 0;
  for (int v = 0; v < dist.hf; ++v) {
    for (int u = 0; u < dist.wf; ++u) {
      for (int b = 0; b < dist.bins; ++b, ++idx) {
        const double z = dist.bin_center(b);
        const double xc = (u - cam.c_u) * z / cam.f_u;
        const double yc = (v - cam.c_v) * z / cam.f_v;
        double xb, yb, zb;
        camera_to_bev(xc, yc, z, xb, yb, zb);
        table[idx] = spec.cell_index(xb, yb, zb);
      }
    }
  }
  return table;
}

BevFeatureMap lift_frustum(const std::vector<double>& image_feats, int channels,
                           const DepthDistribution& dist,
                           const CameraIntrinsics& cam, const BevGridSpec& spec) {
  const std::size_t npix = static_cast<std::size_t>(dist.hf) * dist.wf;
  if (image_feats.size() != npix * channels) {
    throw std::invalid_argument("lift_frustum: feature/distribution shape mismatch");
  }
  const std::vector<int> cells = frustum_cell_table(dist, cam, spec);
  BevFeatureMap out(channels, spec.rows(), spec.cols());
  const std::size_t plane = static_cast<std::size_t>(spec.rows()) * spec.cols();
  for (std::size_t p = 0; p < npix; ++p) {
    for (int b = 0; b < dist.bins; ++b) {
      const int cell = cells[p * dist.bins + b];
      if (cell < 0) continue;
      const double prob = dist.p[p * dist.bins + b];
      for (int c = 0; c < channels; ++c) {
        out.v[c * plane + cell] += image_feats[c * npix + p] * prob;
      }
    }
  }
  return out;
}

namespace {

bool point_in_footprint(double x, double y, const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = x - b.x, dy = y - b.y;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.l && std::abs(ly) <= 0.5 * b.w;
}

}  // namespace

BevMask foreground_mask(const std::vector<Box3D>& gts, const BevGridSpec& spec) {
  BevMask mask(spec.rows(), spec.cols());
  for (const Box3D& b : gts) {
    // Cell range the footprint can touch; the circumscribed radius bounds it.
    const double r = 0.5 * std::sqrt(b.l * b.l + b.w * b.w);
    const int i0 = std::max(0, static_cast<int>((b.x - r - spec.x_min) / spec.cell));
    const int i1 = std::min(spec.rows() - 1,
                            static_cast<int>((b.x + r - spec.x_min) / spec.cell));
    const int j0 = std::max(0, static_cast<int>((b.y - r - spec.y_min) / spec.cell));
    const int j1 = std::min(spec.cols() - 1,
                            static_cast<int>((b.y + r - spec.y_min) / spec.cell));
    for (int i = i0; i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) {
        if (point_in_footprint(spec.cell_center_x(i), spec.cell_center_y(j), b)) {
          mask.at(i, j) = 1;
        }
      }
    }
  }
  return mask;
}

}  // namespace sgm3d
