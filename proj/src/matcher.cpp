#include "sgm3d/matcher.hpp"

namespace sgm3d {

std::vector<std::size_t> filter_predictions(
    const std::vector<PredictionRecord>& preds, double score_thresh) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].score >= score_thresh) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> filter_scores(const std::vector<double>& scores,
                                       double score_thresh) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= score_thresh) out.push_back(i);
  }
  return out;
}

MatchedPairSet match_by_iou(const std::vector<Box3D>& mono,
                            const std::vector<Box3D>& stereo, double min_iou) {
  MatchedPairSet out;
  out.min_iou = min_iou;
  for (std::size_t m = 0; m < mono.size(); ++m) {
    double best = -1.0;
    std::size_t best_s = 0;
    for (std::size_t s = 0; s < stereo.size(); ++s) {
      const double iou = iou_bev(mono[m], stereo[s]);
      if (iou > best) {
        best = iou;
        best_s = s;
      }
    }
    if (best >= min_iou && !stereo.empty()) {
      out.pairs.push_back({m, best_s, best});
    }
  }
  return out;
}

}  // namespace sgm3d
