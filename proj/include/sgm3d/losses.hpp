#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sgm3d/anchors.hpp"
#include "sgm3d/geometry.hpp"

namespace sgm3d {

struct LossWeights {
  double feature = 0.1;
  double anchor = 1.0;
  double fg = 1.0;
  double bg = 0.05;
  double object = 0.01;
  double cls = 1.0;
  double box = 2.0;
  double dir = 0.2;
  double depth = 3.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
};

/// Scalar loss with gradients w.r.t. each named differentiable input.
/// Stereo-branch inputs are teachers and never appear in `grads`.
struct LossValueGrad {
  double value = 0.0;
  std::map<std::string, std::vector<double>> grads;
};

enum class BgNormalizer { Foreground, Background };

/// Eq.-style masked L2 feature distance between the monocular and stereo
/// BEV maps. `normalized` divides by (channels * foreground cells);
/// raw-sum mode keeps the printed form.
LossValueGrad feature_da_loss(const BevFeatureMap& f_mono,
                              const BevFeatureMap& f_stereo,
                              const BevMask& mask, bool normalized = true);

/// Anchor-level KL divergence between softmaxed class logits,
/// teacher = stereo. Both terms divide by |fg| unless `bg_norm` switches
/// the background denominator to |bg|. Empty foreground yields 0.
LossValueGrad anchor_da_loss(const std::vector<double>& logits_mono,
                             const std::vector<double>& logits_stereo,
                             int num_classes,
                             const std::vector<std::size_t>& fg,
                             const std::vector<std::size_t>& bg,
                             const LossWeights& w,
                             BgNormalizer bg_norm = BgNormalizer::Foreground);

double smooth_l1(double d);
double smooth_l1_grad(double d);

/// Confidence truncation used by the object-level alignment: sigmoid of the
/// raw logit clipped to [1e-4, 1 - 1e-4].
double truncate_score(double logit);

/// Mean smooth-L1 between truncated matched confidence pairs; inputs are
/// raw logits per matched pair.
LossValueGrad object_cls_loss(const std::vector<double>& score_logits_mono,
                              const std::vector<double>& score_logits_stereo);

/// Mean squared L2 between matched residual vectors.
LossValueGrad object_box_loss(const std::vector<ResidualVector>& res_mono,
                              const std::vector<ResidualVector>& res_stereo);

/// Per-pixel depth-bin focal loss over supervised pixels (target >= 0);
/// gradients w.r.t. the pre-softmax logits. Layout matches softmax_depth.
LossValueGrad depth_focal_loss(const std::vector<double>& depth_logits,
                               const std::vector<int>& target_bins, int bins,
                               const LossWeights& w);

/// Detection task loss: (focal cls + smooth-L1 box + BCE direction) /
/// max(1, N_pos) plus the weighted depth term. cls_logits are per-anchor
/// vectors over (background + classes).
LossValueGrad detection_task_loss(const std::vector<double>& cls_logits,
                                  int num_classes, const Assignment& assign,
                                  const std::vector<double>& res_pred,
                                  const std::vector<double>& dir_logits,
                                  const LossValueGrad& depth_loss,
                                  const LossWeights& w);

/// Weighted sum of loss terms; gradients accumulate additively per name.
LossValueGrad weighted_sum(
    const std::vector<std::pair<const LossValueGrad*, double>>& parts);

struct TotalLoss {
  double mg_da = 0.0;
  double iou_ma = 0.0;
  double sgm = 0.0;
  LossValueGrad total;
};

/// Full composition: L_MG-DA = w.feature*feature + w.anchor*anchor;
/// L_IoU-MA = w.object*(obj_cls + obj_box); total = MG-DA + IoU-MA + det.
TotalLoss compose_total(const LossValueGrad& feature,
                        const LossValueGrad& anchor,
                        const LossValueGrad& obj_cls,
                        const LossValueGrad& obj_box,
                        const LossValueGrad& detection, const LossWeights& w);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
};

/// Central-difference check of an analytic gradient. Relative error uses
/// max(|analytic|, |numeric|, 1e-8) as the denominator.
GradCheckReport check_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, const std::vector<double>& analytic,
    double h);

}  // namespace sgm3d
