#include "sgm3d/evaluator.hpp"

#include <algorithm>
#include <map>

namespace sgm3d {

Difficulty difficulty_bucket(const GroundTruthObject& gt) {
  const double height = gt.bbox2d[3] - gt.bbox2d[1];
  if (height >= 40.0 && gt.occlusion <= 0 && gt.truncation <= 0.15) {
    return Difficulty::Easy;
  }
  if (height >= 25.0 && gt.occlusion <= 1 && gt.truncation <= 0.30) {
    return Difficulty::Moderate;
  }
  if (height >= 25.0 && gt.occlusion <= 2 && gt.truncation <= 0.50) {
    return Difficulty::Hard;
  }
  return Difficulty::None;
}

namespace {

bool in_bucket(Difficulty d, Difficulty bucket) {
  return d != Difficulty::None &&
         static_cast<int>(d) <= static_cast<int>(bucket);
}

struct FrameGt {
  std::vector<Box3D> boxes;
  std::vector<bool> valid;  // in-bucket, counted in recall
  std::vector<bool> matched;
  std::vector<Box3D> dont_care;
};

}  // namespace

double compute_ap(
    const std::vector<PredictionRecord>& preds,
    const std::vector<std::pair<std::string, GroundTruthObject>>& gts,
    const EvalConfig& cfg, Difficulty bucket) {
  std::map<std::string, FrameGt> frames;
  std::size_t n_gt = 0;
  for (const auto& [frame, gt] : gts) {
    FrameGt& f = frames[frame];
    if (gt.dont_care) {
      if (gt.dims[1] > 0 && gt.dims[2] > 0) {
        f.dont_care.push_back(box_from_camera_object(gt));
      }
      continue;
    }
    if (gt.category != cfg.category) continue;
    const bool valid = in_bucket(difficulty_bucket(gt), bucket);
    f.boxes.push_back(box_from_camera_object(gt));
    f.valid.push_back(valid);
    f.matched.push_back(false);
    if (valid) ++n_gt;
  }
  if (n_gt == 0) return 0.0;

  auto iou = [&](const Box3D& a, const Box3D& b) {
    return cfg.criterion == ApCriterion::Ap3D ? iou_3d(a, b) : iou_bev(a, b);
  };

  // Per-frame prediction order by score (ties by lower original index).
  std::map<std::string, std::vector<std::size_t>> frame_preds;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].category != cfg.category) continue;
    frame_preds[preds[i].frame_id].push_back(i);
  }

  std::vector<std::pair<double, bool>> hits;  // (score, is_tp)
  for (auto& [frame, idxs] : frame_preds) {
    std::stable_sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
      return preds[a].score > preds[b].score;
    });
    auto fit = frames.find(frame);
    FrameGt* f = fit == frames.end() ? nullptr : &fit->second;
    for (std::size_t i : idxs) {
      const Box3D& pb = preds[i].box;
      int best = -1;
      double best_iou = cfg.iou_threshold;
      if (f) {
        for (std::size_t g = 0; g < f->boxes.size(); ++g) {
          if (f->matched[g]) continue;
          const double v = iou(pb, f->boxes[g]);
          if (v >= best_iou && (best < 0 || v > best_iou)) {
            best_iou = v;
            best = static_cast<int>(g);
          }
        }
      }
      if (best >= 0) {
        f->matched[best] = true;
        if (f->valid[best]) {
          hits.emplace_back(preds[i].score, true);
        }
        // Matching an out-of-bucket ground truth is neither TP nor FP.
        continue;
      }
      bool near_dont_care = false;
      if (f) {
        for (const Box3D& dc : f->dont_care) {
          if (iou_bev(pb, dc) > 0.0) {
            near_dont_care = true;
            break;
          }
        }
      }
      if (!near_dont_care) hits.emplace_back(preds[i].score, false);
    }
  }

  std::stable_sort(hits.begin(), hits.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (const auto& [score, is_tp] : hits) {
    (is_tp ? tp : fp) += 1;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / n_gt);
  }

  double ap = 0.0;
  for (int r = 1; r <= cfg.recall_points; ++r) {
    const double target = static_cast<double>(r) / cfg.recall_points;
    double best_p = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i) {
      if (recall[i] >= target - 1e-12) best_p = std::max(best_p, precision[i]);
    }
    ap += best_p;
  }
  return ap / cfg.recall_points;
}

}  // namespace sgm3d
