#pragma once

#include <vector>

#include "sgm3d/geometry.hpp"

namespace sgm3d {

/// Per-cell pillar statistics, 6 channels:
/// count, mean x, mean y, mean z, max z, mean reflectance (1 when absent).
constexpr int kPillarChannels = 6;

/// Deterministic pillar featurizer. Points are expected in the BEV world
/// frame (x forward, y lateral, z up); out-of-range points are dropped.
/// Empty cells stay all-zero.
BevFeatureMap pillarize(const std::vector<double>& xs,
                        const std::vector<double>& ys,
                        const std::vector<double>& zs,
                        const BevGridSpec& spec);

/// Convenience overload: camera-frame cloud, converted internally.
BevFeatureMap pillarize(const PointCloud& camera_cloud, const BevGridSpec& spec);

struct LinearHeadParams {
  int c_in = 0;
  int c_out = 0;
  std::vector<double> weight;  // c_out x c_in, row-major
  std::vector<double> bias;    // c_out

  LinearHeadParams() = default;
  LinearHeadParams(int in, int out)
      : c_in(in), c_out(out),
        weight(static_cast<std::size_t>(in) * out, 0.0), bias(out, 0.0) {}

  double& w(int o, int i) { return weight[static_cast<std::size_t>(o) * c_in + i]; }
  double w(int o, int i) const { return weight[static_cast<std::size_t>(o) * c_in + i]; }
};

struct LinearHeadGrads {
  std::vector<double> d_input;
  std::vector<double> d_weight;
  std::vector<double> d_bias;
};

BevFeatureMap apply_linear_head(const BevFeatureMap& map,
                                const LinearHeadParams& params);

/// Backward of apply_linear_head for an upstream gradient on the output map.
LinearHeadGrads linear_head_backward(const BevFeatureMap& input,
                                     const LinearHeadParams& params,
                                     const BevFeatureMap& upstream);

/// Per-pixel softmax of depth logits (bin-major per pixel, same layout as
/// DepthDistribution::p).
DepthDistribution softmax_depth(const std::vector<double>& logits, int bins,
                                int hf, int wf, double near_m, double far_m);

struct MonoBevResult {
  DepthDistribution dist;
  BevFeatureMap lifted;  // before the linear head, c_img channels
  BevFeatureMap out;
  std::vector<int> cell_table;  // frustum cell per (pixel, bin)
};

struct MonoBevGrads {
  std::vector<double> d_depth_logits;
  std::vector<double> d_weight;
  std::vector<double> d_bias;
};

/// Monocular branch BEV encoder: softmax(depth_logits) -> frustum lift of
/// the image features -> linear head.
MonoBevResult mono_bev(const std::vector<double>& image_feats, int channels,
                       const std::vector<double>& depth_logits, int bins,
                       int hf, int wf, double near_m, double far_m,
                       const CameraIntrinsics& cam, const BevGridSpec& spec,
                       const LinearHeadParams& params);

/// Backward of mono_bev w.r.t. the depth logits and head parameters, given
/// an upstream gradient on the output map.
MonoBevGrads mono_bev_backward(const std::vector<double>& image_feats,
                               const MonoBevResult& fwd,
                               const LinearHeadParams& params,
                               const BevFeatureMap& upstream);

}  // namespace sgm3d
