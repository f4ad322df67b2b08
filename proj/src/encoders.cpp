#include "sgm3d/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgm3d {

BevFeatureMap pillarize(const std::vector<double>& xs,
                        const std::vector<double>& ys,
                        const std::vector<double>& zs,
                        const BevGridSpec& spec) {
  const int H = spec.rows(), W = spec.cols();
  BevFeatureMap out(kPillarChannels, H, W);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  // Accumulate sums first, then normalize the means.
  std::vector<double> sx(plane, 0.0), sy(plane, 0.0), sz(plane, 0.0);
  std::vector<double> zmax(plane, 0.0);
  std::vector<double> cnt(plane, 0.0);
  for (std::size_t p = 0; p < xs.size(); ++p) {
    const int cell = spec.cell_index(xs[p], ys[p], zs[p]);
    if (cell < 0) continue;
    if (cnt[cell] == 0.0 || zs[p] > zmax[cell]) zmax[cell] = zs[p];
    cnt[cell] += 1.0;
    sx[cell] += xs[p];
    sy[cell] += ys[p];
    sz[cell] += zs[p];
  }
  for (std::size_t c = 0; c < plane; ++c) {
    if (cnt[c] == 0.0) continue;
    out.v[0 * plane + c] = cnt[c];
    out.v[1 * plane + c] = sx[c] / cnt[c];
    out.v[2 * plane + c] = sy[c] / cnt[c];
    out.v[3 * plane + c] = sz[c] / cnt[c];
    out.v[4 * plane + c] = zmax[c];
    out.v[5 * plane + c] = 1.0;  // no reflectance channel in this pipeline
  }
  return out;
}

BevFeatureMap pillarize(const PointCloud& camera_cloud, const BevGridSpec& spec) {
  std::vector<double> xs(camera_cloud.size()), ys(camera_cloud.size()),
      zs(camera_cloud.size());
  for (std::size_t i = 0; i < camera_cloud.size(); ++i) {
    camera_to_bev(camera_cloud.xs[i], camera_cloud.ys[i], camera_cloud.zs[i],
                  xs[i], ys[i], zs[i]);
  }
  return pillarize(xs, ys, zs, spec);
}

BevFeatureMap apply_linear_head(const BevFeatureMap& map,
                                const LinearHeadParams& params) {
  if (map.channels != params.c_in) {
    throw std::invalid_argument("apply_linear_head: channel mismatch");
  }
  BevFeatureMap out(params.c_out, map.rows, map.cols);
  const std::size_t plane = static_cast<std::size_t>(map.rows) * map.cols;
  for (int o = 0; o < params.c_out; ++o) {
    for (std::size_t p = 0; p < plane; ++p) out.v[o * plane + p] = params.bias[o];
    for (int i = 0; i < params.c_in; ++i) {
      const double w = params.w(o, i);
      if (w == 0.0) continue;
      for (std::size_t p = 0; p < plane; ++p) {
        out.v[o * plane + p] += w * map.v[i * plane + p];
      }
    }
  }
  return out;
}

LinearHeadGrads linear_head_backward(const BevFeatureMap& input,
                                     const LinearHeadParams& params,
                                     const BevFeatureMap& upstream) {
  if (upstream.channels != params.c_out || input.channels != params.c_in) {
    throw std::invalid_argument("linear_head_backward: shape mismatch");
  }
  const std::size_t plane = static_cast<std::size_t>(input.rows) * input.cols;
  LinearHeadGrads g;
  g.d_input.assign(input.v.size(), 0.0);
  g.d_weight.assign(params.weight.size(), 0.0);
  g.d_bias.assign(params.bias.size(), 0.0);
  for (int o = 0; o < params.c_out; ++o) {
    double db = 0.0;
    for (std::size_t p = 0; p < plane; ++p) db += upstream.v[o * plane + p];
    g.d_bias[o] = db;
    for (int i = 0; i < params.c_in; ++i) {
      double dw = 0.0;
      const double w = params.w(o, i);
      for (std::size_t p = 0; p < plane; ++p) {
        const double up = upstream.v[o * plane + p];
        dw += up * input.v[i * plane + p];
        g.d_input[i * plane + p] += up * w;
      }
      g.d_weight[static_cast<std::size_t>(o) * params.c_in + i] = dw;
    }
  }
  return g;
}

DepthDistribution softmax_depth(const std::vector<double>& logits, int bins,
                                int hf, int wf, double near_m, double far_m) {
  const std::size_t npix = static_cast<std::size_t>(hf) * wf;
  if (logits.size() != npix * bins) {
    throw std::invalid_argument("softmax_depth: logits shape mismatch");
  }
  DepthDistribution dist(bins, hf, wf, near_m, far_m);
  for (std::size_t p = 0; p < npix; ++p) {
    const double* z = logits.data() + p * bins;
    double m = z[0];
    for (int b = 1; b < bins; ++b) m = std::max(m, z[b]);
    double sum = 0.0;
    for (int b = 0; b < bins; ++b) {
      const double e = std::exp(z[b] - m);
      dist.p[p * bins + b] = e;
      sum += e;
    }
    for (int b = 0; b < bins; ++b) dist.p[p * bins + b] /= sum;
  }
  return dist;
}

MonoBevResult mono_bev(const std::vector<double>& image_feats, int channels,
                       const std::vector<double>& depth_logits, int bins,
                       int hf, int wf, double near_m, double far_m,
                       const CameraIntrinsics& cam, const BevGridSpec& spec,
                       const LinearHeadParams& params) {
  MonoBevResult r;
  r.dist = softmax_depth(depth_logits, bins, hf, wf, near_m, far_m);
  r.cell_table = frustum_cell_table(r.dist, cam, spec);
  r.lifted = lift_frustum(image_feats, channels, r.dist, cam, spec);
  r.out = apply_linear_head(r.lifted, params);
  return r;
}

MonoBevGrads mono_bev_backward(const std::vector<double>& image_feats,
                               const MonoBevResult& fwd,
                               const LinearHeadParams& params,
                               const BevFeatureMap& upstream) {
  const LinearHeadGrads head = linear_head_backward(fwd.lifted, params, upstream);
  const int bins = fwd.dist.bins;
  const std::size_t npix = static_cast<std::size_t>(fwd.dist.hf) * fwd.dist.wf;
  const std::size_t plane =
      static_cast<std::size_t>(fwd.lifted.rows) * fwd.lifted.cols;
  const int channels = fwd.lifted.channels;

  MonoBevGrads g;
  g.d_weight = head.d_weight;
  g.d_bias = head.d_bias;
  g.d_depth_logits.assign(npix * bins, 0.0);

  // d(lifted cell)/d(prob) = image feature; then softmax backward per pixel.
  std::vector<double> d_prob(bins);
  for (std::size_t p = 0; p < npix; ++p) {
    for (int b = 0; b < bins; ++b) {
      const int cell = fwd.cell_table[p * bins + b];
      double acc = 0.0;
      if (cell >= 0) {
        for (int c = 0; c < channels; ++c) {
          acc += head.d_input[c * plane + cell] * image_feats[c * npix + p];
        }
      }
      d_prob[b] = acc;
    }
    double dot = 0.0;
    for (int b = 0; b < bins; ++b) dot += d_prob[b] * fwd.dist.p[p * bins + b];
    for (int b = 0; b < bins; ++b) {
      const double pr = fwd.dist.p[p * bins + b];
      g.d_depth_logits[p * bins + b] = pr * (d_prob[b] - dot);
    }
  }
  return g;
}

}  // namespace sgm3d
