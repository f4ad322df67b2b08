#include <random>

#include "doctest.h"
#include "sgm3d/geometry.hpp"

using namespace sgm3d;

namespace {

CameraIntrinsics test_cam() { return {100.0, 100.0, 50.0, 40.0, 0.54}; }

}  // namespace

TEST_CASE("unproject_depth pinhole algebra") {
  const CameraIntrinsics cam = test_cam();
  std::vector<float> depth(120 * 100, 0.0f);
  depth[40 * 100 + 50] = 7.0f;           // principal point
  depth[40 * 100 + 50 + 100 - 100] = 7.0f;
  DepthRasterView view{100, 120, depth.data()};

  PointCloud pc = unproject_depth(view, cam);
  REQUIRE(pc.size() == 1);
  CHECK(pc.xs[0] == doctest::Approx(0.0));
  CHECK(pc.ys[0] == doctest::Approx(0.0));
  CHECK(pc.zs[0] == doctest::Approx(7.0));

  // Pixel at (c_u + f_u, c_v) is impossible at width 100, so shrink: use
  // f_u = 10 for the second algebra check.
  CameraIntrinsics cam2{10.0, 10.0, 50.0, 40.0, 0.0};
  std::vector<float> d2(120 * 100, 0.0f);
  d2[40 * 100 + 60] = 10.0f;  // u = c_u + f_u
  PointCloud pc2 = unproject_depth({100, 120, d2.data()}, cam2);
  REQUIRE(pc2.size() == 1);
  CHECK(pc2.xs[0] == doctest::Approx(10.0));
  CHECK(pc2.ys[0] == doctest::Approx(0.0));
  CHECK(pc2.zs[0] == doctest::Approx(10.0));
}

TEST_CASE("unproject_depth skips sentinels; count matches brute force") {
  const CameraIntrinsics cam = test_cam();
  std::vector<float> depth = {0.0f, 3.0f, 2.5f, 0.0f};
  PointCloud pc = unproject_depth({2, 2, depth.data()}, cam);
  CHECK(pc.size() == 2);
}

TEST_CASE("unproject then reproject recovers pixels") {
  const CameraIntrinsics cam = test_cam();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ud(1.0, 50.0);
  const int w = 16, h = 12;
  std::vector<float> depth(w * h);
  for (auto& d : depth) d = static_cast<float>(ud(rng));
  PointCloud pc = unproject_depth({w, h, depth.data()}, cam);
  REQUIRE(pc.size() == static_cast<std::size_t>(w * h));
  std::size_t i = 0;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u, ++i) {
      const double ru = pc.xs[i] * cam.f_u / pc.zs[i] + cam.c_u;
      const double rv = pc.ys[i] * cam.f_v / pc.zs[i] + cam.c_v;
      CHECK(std::abs(ru - u) < 1e-9);
      CHECK(std::abs(rv - v) < 1e-9);
    }
  }
}

TEST_CASE("lift_frustum one-hot placement conserves feature mass") {
  const CameraIntrinsics cam{20.0, 20.0, 8.0, 6.0, 0.0};
  BevGridSpec spec{0.0, 20.0, -10.0, 10.0, -5.0, 5.0, 0.5};
  const int hf = 12, wf = 16, bins = 8;
  DepthDistribution dist(bins, hf, wf, 2.0, 18.0);
  const int hot = 3;
  for (int v = 0; v < hf; ++v)
    for (int u = 0; u < wf; ++u) dist.prob(v, u, hot) = 1.0;

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ur(0.0, 1.0);
  const int c = 2;
  std::vector<double> feats(c * hf * wf);
  for (auto& f : feats) f = ur(rng);

  BevFeatureMap bev = lift_frustum(feats, c, dist, cam, spec);

  // Brute-force expected totals via the one-hot shortcut.
  const auto cells = frustum_cell_table(dist, cam, spec);
  double expect = 0.0, got = 0.0;
  for (int p = 0; p < hf * wf; ++p) {
    if (cells[static_cast<std::size_t>(p) * bins + hot] >= 0) {
      for (int ch = 0; ch < c; ++ch) expect += feats[ch * hf * wf + p];
    }
  }
  for (double v : bev.v) got += v;
  CHECK(expect > 0.0);
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("lift_frustum zero features give zero map") {
  const CameraIntrinsics cam{20.0, 20.0, 8.0, 6.0, 0.0};
  BevGridSpec spec{0.0, 20.0, -10.0, 10.0, -5.0, 5.0, 0.5};
  DepthDistribution dist(4, 3, 4, 2.0, 10.0);
  for (auto& p : dist.p) p = 0.25;
  std::vector<double> feats(2 * 3 * 4, 0.0);
  BevFeatureMap bev = lift_frustum(feats, 2, dist, cam, spec);
  for (double v : bev.v) CHECK(v == 0.0);
}

TEST_CASE("lift_frustum accumulates bins landing in one cell") {
  // Two bins whose centers unproject to the same BEV cell: the cell ends
  // up with the full feature value under a uniform 2-bin distribution.
  const CameraIntrinsics cam{20.0, 20.0, 0.0, 0.0, 0.0};
  BevGridSpec spec{0.0, 20.0, -10.0, 10.0, -5.0, 5.0, 4.0};
  DepthDistribution dist(2, 1, 1, 8.0, 12.0);  // centers 9 and 11, same 4 m cell
  dist.prob(0, 0, 0) = 0.5;
  dist.prob(0, 0, 1) = 0.5;
  std::vector<double> feats = {3.0};
  BevFeatureMap bev = lift_frustum(feats, 1, dist, cam, spec);
  double total = 0.0;
  int nonzero = 0;
  for (double v : bev.v) {
    total += v;
    if (v != 0.0) ++nonzero;
  }
  CHECK(nonzero == 1);
  CHECK(total == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("lift_frustum linearity in image features") {
  const CameraIntrinsics cam{20.0, 20.0, 8.0, 6.0, 0.0};
  BevGridSpec spec{0.0, 20.0, -10.0, 10.0, -5.0, 5.0, 0.5};
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ur(-1.0, 1.0);
  const int hf = 6, wf = 8, bins = 5, c = 3;
  DepthDistribution dist(bins, hf, wf, 2.0, 12.0);
  for (int p = 0; p < hf * wf; ++p) {
    double sum = 0.0;
    std::vector<double> raw(bins);
    for (int b = 0; b < bins; ++b) {
      raw[b] = std::abs(ur(rng)) + 0.01;
      sum += raw[b];
    }
    for (int b = 0; b < bins; ++b) dist.p[static_cast<std::size_t>(p) * bins + b] = raw[b] / sum;
  }
  std::vector<double> feats(c * hf * wf);
  for (auto& f : feats) f = ur(rng);
  const double a = 2.718;
  std::vector<double> scaled = feats;
  for (auto& f : scaled) f *= a;

  BevFeatureMap m1 = lift_frustum(feats, c, dist, cam, spec);
  BevFeatureMap m2 = lift_frustum(scaled, c, dist, cam, spec);
  for (std::size_t i = 0; i < m1.v.size(); ++i) {
    CHECK(m2.v[i] == doctest::Approx(a * m1.v[i]).epsilon(1e-12));
  }
}

TEST_CASE("foreground_mask") {
  BevGridSpec spec{0.0, 10.0, -5.0, 5.0, -2.0, 2.0, 1.0};

  CHECK(foreground_mask({}, spec).count() == 0);

  // Axis-aligned box covering cells (2..4) x (2..4): centers 2.5..4.5
  // forward, -2.5..-0.5 lateral.
  Box3D b;
  b.x = 3.5;
  b.y = -1.5;
  b.z = 0.0;
  b.l = 3.0;
  b.w = 3.0;
  b.h = 1.0;
  BevMask m = foreground_mask({b}, spec);
  CHECK(m.count() == 9);
  for (int i = 2; i <= 4; ++i)
    for (int j = 2; j <= 4; ++j) CHECK(m.at(i, j) == 1);

  Box3D outside = b;
  outside.x = 100.0;
  CHECK(foreground_mask({outside}, spec).count() == 0);

  // Yaw + 2*pi invariance.
  Box3D rot = b;
  rot.yaw = 0.7;
  Box3D rot2 = rot;
  rot2.yaw += 2.0 * M_PI;
  CHECK(foreground_mask({rot}, spec).v == foreground_mask({rot2}, spec).v);

  // Monotonicity: adding a box never clears a cell.
  Box3D extra;
  extra.x = 7.5;
  extra.y = 2.5;
  extra.l = 2.0;
  extra.w = 2.0;
  extra.h = 1.0;
  BevMask m1 = foreground_mask({b}, spec);
  BevMask m2 = foreground_mask({b, extra}, spec);
  for (std::size_t i = 0; i < m1.v.size(); ++i) {
    if (m1.v[i]) CHECK(m2.v[i] == 1);
  }
}
