#include "sgm3d/heatmap.hpp"

#include <algorithm>
#include <cmath>

namespace sgm3d {

HeatmapImage render_heatmap(const BevFeatureMap& map,
                            const std::vector<Box3D>& boxes,
                            const BevGridSpec& spec) {
  HeatmapImage img;
  img.rows = map.rows;
  img.cols = map.cols;
  img.pixels.assign(static_cast<std::size_t>(map.rows) * map.cols, 0);

  const std::size_t plane = static_cast<std::size_t>(map.rows) * map.cols;
  std::vector<double> mean(plane, 0.0);
  for (int c = 0; c < map.channels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) mean[p] += map.v[c * plane + p];
  }
  for (double& m : mean) m /= std::max(1, map.channels);

  const auto [mn_it, mx_it] = std::minmax_element(mean.begin(), mean.end());
  const double mn = *mn_it, mx = *mx_it;
  if (mx - mn <= 0.0) {
    std::fill(img.pixels.begin(), img.pixels.end(), 128);
  } else {
    for (std::size_t p = 0; p < plane; ++p) {
      img.pixels[p] =
          static_cast<std::uint8_t>(std::lround((mean[p] - mn) / (mx - mn) * 255.0));
    }
  }

  // Box outlines: sample along each footprint edge at sub-cell steps.
  for (const Box3D& b : boxes) {
    const auto corners = bev_corners(b);
    for (int e = 0; e < 4; ++e) {
      const auto& [x0, y0] = corners[e];
      const auto& [x1, y1] = corners[(e + 1) % 4];
      const double len = std::hypot(x1 - x0, y1 - y0);
      const int steps = std::max(2, static_cast<int>(len / (0.25 * spec.cell)));
      for (int s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / steps;
        const double x = x0 + t * (x1 - x0);
        const double y = y0 + t * (y1 - y0);
        const int i = static_cast<int>((x - spec.x_min) / spec.cell);
        const int j = static_cast<int>((y - spec.y_min) / spec.cell);
        if (i >= 0 && i < img.rows && j >= 0 && j < img.cols &&
            x >= spec.x_min && y >= spec.y_min) {
          img.at(i, j) = 255;
        }
      }
    }
  }
  return img;
}

std::string encode_pgm(const HeatmapImage& img) {
  std::string out = "P5\n" + std::to_string(img.cols) + " " +
                    std::to_string(img.rows) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()),
             img.pixels.size());
  return out;
}

}  // namespace sgm3d
