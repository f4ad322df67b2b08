#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgm3d/boxes.hpp"
#include "sgm3d/geometry.hpp"

namespace sgm3d {

struct HeatmapImage {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  std::uint8_t& at(int i, int j) { return pixels[static_cast<std::size_t>(i) * cols + j]; }
  std::uint8_t at(int i, int j) const { return pixels[static_cast<std::size_t>(i) * cols + j]; }
};

/// Channel-averaged, min-max normalized BEV response heatmap with optional
/// box outlines rasterized at cell resolution. A constant map renders as
/// uniform 128.
HeatmapImage render_heatmap(const BevFeatureMap& map,
                            const std::vector<Box3D>& boxes,
                            const BevGridSpec& spec);

/// Binary PGM (P5) encoding.
std::string encode_pgm(const HeatmapImage& img);

}  // namespace sgm3d
