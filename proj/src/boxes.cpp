#include "sgm3d/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sgm3d {

double normalize_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0) a += 2.0 * M_PI;
  return a - M_PI;
}

ResidualVector encode_residual(const Box3D& gt, const Box3D& anchor) {
  const double d = std::sqrt(anchor.l * anchor.l + anchor.w * anchor.w);
  ResidualVector r;
  r[0] = (gt.x - anchor.x) / d;
  r[1] = (gt.y - anchor.y) / d;
  r[2] = (gt.z - anchor.z) / anchor.h;
  r[3] = std::log(gt.l / anchor.l);
  r[4] = std::log(gt.w / anchor.w);
  r[5] = std::log(gt.h / anchor.h);
  r[6] = gt.yaw - anchor.yaw;
  return r;
}

Box3D decode_residual(const ResidualVector& res, const Box3D& anchor) {
  const double d = std::sqrt(anchor.l * anchor.l + anchor.w * anchor.w);
  Box3D b;
  b.x = res[0] * d + anchor.x;
  b.y = res[1] * d + anchor.y;
  b.z = res[2] * anchor.h + anchor.z;
  b.l = std::exp(res[3]) * anchor.l;
  b.w = std::exp(res[4]) * anchor.w;
  b.h = std::exp(res[5]) * anchor.h;
  b.yaw = res[6] + anchor.yaw;
  return b;
}

std::vector<std::pair<double, double>> bev_corners(const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = 0.5 * b.l, hw = 0.5 * b.w;
  // Local corners (+-hl, +-hw), counter-clockwise.
  const double lx[4] = {hl, -hl, -hl, hl};
  const double ly[4] = {hw, hw, -hw, -hw};
  std::vector<std::pair<double, double>> out(4);
  for (int i = 0; i < 4; ++i) {
    out[i] = {b.x + c * lx[i] - s * ly[i], b.y + s * lx[i] + c * ly[i]};
  }
  return out;
}

namespace {

using Poly = std::vector<std::pair<double, double>>;

double shoelace_area(const Poly& p) {
  double a = 0.0;
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [x0, y0] = p[i];
    const auto& [x1, y1] = p[(i + 1) % n];
    a += x0 * y1 - x1 * y0;
  }
  return 0.5 * std::abs(a);
}

// Sutherland-Hodgman clip of `subject` against the half plane on the left
// of the directed edge (a -> b).
Poly clip_edge(const Poly& subject, std::pair<double, double> a,
               std::pair<double, double> b) {
  auto side = [&](const std::pair<double, double>& p) {
    return (b.first - a.first) * (p.second - a.second) -
           (b.second - a.second) * (p.first - a.first);
  };
  Poly out;
  const std::size_t n = subject.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cur = subject[i];
    const auto& nxt = subject[(i + 1) % n];
    const double sc = side(cur), sn = side(nxt);
    if (sc >= 0) out.push_back(cur);
    if ((sc > 0 && sn < 0) || (sc < 0 && sn > 0)) {
      const double t = sc / (sc - sn);
      out.emplace_back(cur.first + t * (nxt.first - cur.first),
                       cur.second + t * (nxt.second - cur.second));
    }
  }
  return out;
}

double footprint_intersection_area(const Box3D& a, const Box3D& b) {
  Poly poly = bev_corners(a);
  const Poly cb = bev_corners(b);
  for (int i = 0; i < 4 && !poly.empty(); ++i) {
    poly = clip_edge(poly, cb[i], cb[(i + 1) % 4]);
  }
  if (poly.size() < 3) return 0.0;
  return shoelace_area(poly);
}

}  // namespace

double iou_bev(const Box3D& a, const Box3D& b) {
  const double inter = footprint_intersection_area(a, b);
  const double ua = a.l * a.w + b.l * b.w - inter;
  if (ua <= 0.0) return 0.0;
  return inter / ua;
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double inter_area = footprint_intersection_area(a, b);
  const double zlo = std::max(a.z - 0.5 * a.h, b.z - 0.5 * b.h);
  const double zhi = std::min(a.z + 0.5 * a.h, b.z + 0.5 * b.h);
  const double dz = std::max(0.0, zhi - zlo);
  const double inter = inter_area * dz;
  const double uni = a.l * a.w * a.h + b.l * b.w * b.h - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

std::vector<std::size_t> nms_bev(const std::vector<Box3D>& boxes,
                                 const std::vector<double>& scores,
                                 double iou_thresh) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("nms_bev: boxes/scores length mismatch");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (scores[i] != scores[j]) return scores[i] > scores[j];
    return i < j;
  });
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    bool ok = true;
    for (std::size_t k : kept) {
      if (iou_bev(boxes[idx], boxes[k]) > iou_thresh) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(idx);
  }
  return kept;
}

}  // namespace sgm3d
