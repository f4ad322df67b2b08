#pragma once

#include <vector>

#include "sgm3d/boxes.hpp"
#include "sgm3d/data_io.hpp"

namespace sgm3d {

struct MatchedPair {
  std::size_t mono_index = 0;
  std::size_t stereo_index = 0;
  double iou = 0.0;
};

struct MatchedPairSet {
  std::vector<MatchedPair> pairs;
  double min_iou = 0.25;
};

/// Indices with score >= score_thresh, original order preserved.
std::vector<std::size_t> filter_predictions(
    const std::vector<PredictionRecord>& preds, double score_thresh);

std::vector<std::size_t> filter_scores(const std::vector<double>& scores,
                                       double score_thresh);

/// For each mono box, the stereo box with the highest BEV IoU; the pair is
/// kept iff iou >= min_iou. A stereo box may serve several mono boxes;
/// IoU ties break toward the lower stereo index.
MatchedPairSet match_by_iou(const std::vector<Box3D>& mono,
                            const std::vector<Box3D>& stereo, double min_iou);

}  // namespace sgm3d
