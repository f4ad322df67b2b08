#include "sgm3d/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgm3d {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr double kScoreClip = 1e-4;

void softmax_row(const double* z, int k, double* out) {
  double m = z[0];
  for (int i = 1; i < k; ++i) m = std::max(m, z[i]);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    out[i] = std::exp(z[i] - m);
    sum += out[i];
  }
  for (int i = 0; i < k; ++i) out[i] /= sum;
}

// Focal term -alpha*(1-p_t)^gamma*ln(p_t) on a softmax row; adds the
// gradient w.r.t. the row logits scaled by `scale`.
double focal_row(const double* probs, int k, int target, double alpha,
                 double gamma, double scale, double* grad_out) {
  const double pt = std::max(probs[target], kProbFloor);
  const double one_m = 1.0 - pt;
  const double powg = std::pow(one_m, gamma);
  const double value = -alpha * powg * std::log(pt);
  if (grad_out) {
    double dldpt;
    if (gamma == 0.0) {
      dldpt = -alpha / pt;
    } else {
      dldpt = -alpha * (-gamma * std::pow(one_m, gamma - 1.0) * std::log(pt) +
                        powg / pt);
    }
    for (int j = 0; j < k; ++j) {
      const double d = (j == target) ? 1.0 : 0.0;
      grad_out[j] += scale * dldpt * pt * (d - probs[j]);
    }
  }
  return value;
}

}  // namespace

LossValueGrad feature_da_loss(const BevFeatureMap& f_mono,
                              const BevFeatureMap& f_stereo,
                              const BevMask& mask, bool normalized) {
  if (f_mono.channels != f_stereo.channels || f_mono.rows != f_stereo.rows ||
      f_mono.cols != f_stereo.cols || mask.rows != f_mono.rows ||
      mask.cols != f_mono.cols) {
    throw std::invalid_argument("feature_da_loss: shape mismatch");
  }
  const std::size_t plane = static_cast<std::size_t>(f_mono.rows) * f_mono.cols;
  const double norm =
      normalized ? std::max<double>(1.0, static_cast<double>(f_mono.channels) *
                                             mask.count())
                 : 1.0;
  LossValueGrad out;
  auto& grad = out.grads["F_M"];
  grad.assign(f_mono.v.size(), 0.0);
  double sum = 0.0;
  for (int c = 0; c < f_mono.channels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      if (!mask.v[p]) continue;
      const double d = f_mono.v[c * plane + p] - f_stereo.v[c * plane + p];
      sum += d * d;
      grad[c * plane + p] = 2.0 * d / norm;
    }
  }
  out.value = sum / norm;
  return out;
}

LossValueGrad anchor_da_loss(const std::vector<double>& logits_mono,
                             const std::vector<double>& logits_stereo,
                             int num_classes,
                             const std::vector<std::size_t>& fg,
                             const std::vector<std::size_t>& bg,
                             const LossWeights& w, BgNormalizer bg_norm) {
  if (logits_mono.size() != logits_stereo.size() ||
      logits_mono.size() % num_classes != 0) {
    throw std::invalid_argument("anchor_da_loss: logits shape mismatch");
  }
  LossValueGrad out;
  auto& grad = out.grads["logits_M"];
  grad.assign(logits_mono.size(), 0.0);
  if (fg.empty()) {
    // Defined as 0 when no foreground anchors exist.
    return out;
  }
  const double fg_norm = static_cast<double>(fg.size());
  const double bg_denom = bg_norm == BgNormalizer::Foreground
                              ? fg_norm
                              : std::max<double>(1.0, bg.size());

  std::vector<double> ps(num_classes), pm(num_classes);
  auto accumulate = [&](const std::vector<std::size_t>& set, double weight,
                        double denom) {
    if (weight == 0.0) return 0.0;
    double sum = 0.0;
    for (std::size_t a : set) {
      const std::size_t off = a * num_classes;
      softmax_row(logits_stereo.data() + off, num_classes, ps.data());
      softmax_row(logits_mono.data() + off, num_classes, pm.data());
      double kl = 0.0;
      for (int k = 0; k < num_classes; ++k) {
        const double s = std::max(ps[k], kProbFloor);
        const double m = std::max(pm[k], kProbFloor);
        kl += s * std::log(s / m);
        // dKL/dz_M = softmax(M) - softmax(S)
        grad[off + k] += weight / denom * (pm[k] - ps[k]);
      }
      sum += kl;
    }
    return weight * sum / denom;
  };
  out.value = accumulate(fg, w.fg, fg_norm) + accumulate(bg, w.bg, bg_denom);
  return out;
}

double smooth_l1(double d) {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

double smooth_l1_grad(double d) {
  if (d > 1.0) return 1.0;
  if (d < -1.0) return -1.0;
  return d;
}

double truncate_score(double logit) {
  const double s = 1.0 / (1.0 + std::exp(-logit));
  return std::clamp(s, kScoreClip, 1.0 - kScoreClip);
}

LossValueGrad object_cls_loss(const std::vector<double>& score_logits_mono,
                              const std::vector<double>& score_logits_stereo) {
  if (score_logits_mono.size() != score_logits_stereo.size()) {
    throw std::invalid_argument("object_cls_loss: pair count mismatch");
  }
  LossValueGrad out;
  auto& grad = out.grads["scores_M"];
  grad.assign(score_logits_mono.size(), 0.0);
  if (score_logits_mono.empty()) return out;
  const double n = static_cast<double>(score_logits_mono.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < score_logits_mono.size(); ++i) {
    const double sm = truncate_score(score_logits_mono[i]);
    const double ss = truncate_score(score_logits_stereo[i]);
    const double d = sm - ss;
    sum += smooth_l1(d);
    const double raw = 1.0 / (1.0 + std::exp(-score_logits_mono[i]));
    const bool clipped = raw <= kScoreClip || raw >= 1.0 - kScoreClip;
    grad[i] = clipped ? 0.0 : smooth_l1_grad(d) * raw * (1.0 - raw) / n;
  }
  out.value = sum / n;
  return out;
}

LossValueGrad object_box_loss(const std::vector<ResidualVector>& res_mono,
                              const std::vector<ResidualVector>& res_stereo) {
  if (res_mono.size() != res_stereo.size()) {
    throw std::invalid_argument("object_box_loss: pair count mismatch");
  }
  LossValueGrad out;
  auto& grad = out.grads["res_M"];
  grad.assign(res_mono.size() * 7, 0.0);
  if (res_mono.empty()) return out;
  const double n = static_cast<double>(res_mono.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < res_mono.size(); ++i) {
    for (int c = 0; c < 7; ++c) {
      const double d = res_mono[i][c] - res_stereo[i][c];
      sum += d * d;
      grad[i * 7 + c] = 2.0 * d / n;
    }
  }
  out.value = sum / n;
  return out;
}

LossValueGrad depth_focal_loss(const std::vector<double>& depth_logits,
                               const std::vector<int>& target_bins, int bins,
                               const LossWeights& w) {
  const std::size_t npix = target_bins.size();
  if (depth_logits.size() != npix * bins) {
    throw std::invalid_argument("depth_focal_loss: logits shape mismatch");
  }
  std::size_t supervised = 0;
  for (int t : target_bins) {
    if (t >= bins) throw std::out_of_range("depth_focal_loss: invalid target bin");
    if (t >= 0) ++supervised;
  }
  LossValueGrad out;
  auto& grad = out.grads["depth_logits"];
  grad.assign(depth_logits.size(), 0.0);
  if (supervised == 0) return out;
  const double scale = 1.0 / static_cast<double>(supervised);
  std::vector<double> probs(bins);
  double sum = 0.0;
  for (std::size_t p = 0; p < npix; ++p) {
    const int t = target_bins[p];
    if (t < 0) continue;
    softmax_row(depth_logits.data() + p * bins, bins, probs.data());
    sum += focal_row(probs.data(), bins, t, w.focal_alpha, w.focal_gamma, scale,
                     grad.data() + p * bins);
  }
  out.value = sum * scale;
  return out;
}

LossValueGrad detection_task_loss(const std::vector<double>& cls_logits,
                                  int num_classes, const Assignment& assign,
                                  const std::vector<double>& res_pred,
                                  const std::vector<double>& dir_logits,
                                  const LossValueGrad& depth_loss,
                                  const LossWeights& w) {
  const int k = num_classes + 1;  // class 0 is background
  const std::size_t n_anchors = dir_logits.size();
  if (cls_logits.size() != n_anchors * k || res_pred.size() != n_anchors * 7) {
    throw std::invalid_argument("detection_task_loss: shape mismatch");
  }
  const double n_pos = std::max<double>(1.0, assign.fg.size());

  LossValueGrad out;
  auto& g_cls = out.grads["cls_logits"];
  auto& g_res = out.grads["res_pred"];
  auto& g_dir = out.grads["dir_logits"];
  g_cls.assign(cls_logits.size(), 0.0);
  g_res.assign(res_pred.size(), 0.0);
  g_dir.assign(dir_logits.size(), 0.0);

  std::vector<double> probs(k);
  double l_cls = 0.0, l_box = 0.0, l_dir = 0.0;
  const double cls_scale = w.cls / n_pos;
  auto cls_term = [&](std::size_t a, int target) {
    softmax_row(cls_logits.data() + a * k, k, probs.data());
    l_cls += focal_row(probs.data(), k, target, w.focal_alpha, w.focal_gamma,
                       cls_scale, g_cls.data() + a * k);
  };
  for (std::size_t a : assign.bg) cls_term(a, 0);
  for (std::size_t a : assign.fg) {
    const AnchorTarget& t = assign.targets.at(a);
    cls_term(a, t.class_id);
    for (int c = 0; c < 7; ++c) {
      const double d = res_pred[a * 7 + c] - t.residual[c];
      l_box += smooth_l1(d);
      g_res[a * 7 + c] = w.box / n_pos * smooth_l1_grad(d);
    }
    const double s = 1.0 / (1.0 + std::exp(-dir_logits[a]));
    const double sc = std::clamp(s, kProbFloor, 1.0 - kProbFloor);
    l_dir += -(t.direction * std::log(sc) + (1 - t.direction) * std::log(1.0 - sc));
    g_dir[a] = w.dir / n_pos * (s - t.direction);
  }

  out.value = (w.cls * l_cls + w.box * l_box + w.dir * l_dir) / n_pos +
              w.depth * depth_loss.value;
  for (const auto& [name, g] : depth_loss.grads) {
    auto& dst = out.grads[name];
    dst.resize(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += w.depth * g[i];
  }
  return out;
}

LossValueGrad weighted_sum(
    const std::vector<std::pair<const LossValueGrad*, double>>& parts) {
  LossValueGrad out;
  for (const auto& [part, coeff] : parts) {
    out.value += coeff * part->value;
    for (const auto& [name, g] : part->grads) {
      auto& dst = out.grads[name];
      if (dst.size() < g.size()) dst.resize(g.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += coeff * g[i];
    }
  }
  return out;
}

TotalLoss compose_total(const LossValueGrad& feature,
                        const LossValueGrad& anchor,
                        const LossValueGrad& obj_cls,
                        const LossValueGrad& obj_box,
                        const LossValueGrad& detection, const LossWeights& w) {
  TotalLoss t;
  t.mg_da = w.feature * feature.value + w.anchor * anchor.value;
  t.iou_ma = w.object * (obj_cls.value + obj_box.value);
  t.sgm = t.mg_da + t.iou_ma;
  t.total = weighted_sum({{&feature, w.feature},
                          {&anchor, w.anchor},
                          {&obj_cls, w.object},
                          {&obj_box, w.object},
                          {&detection, 1.0}});
  return t;
}

GradCheckReport check_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, const std::vector<double>& analytic,
    double h) {
  if (x.size() != analytic.size()) {
    throw std::invalid_argument("check_gradient: size mismatch");
  }
  GradCheckReport rep;
  std::vector<double> xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("check_gradient: non-finite loss value");
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(numeric - analytic[i]) / denom;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_index = i;
    }
  }
  return rep;
}

}  // namespace sgm3d
