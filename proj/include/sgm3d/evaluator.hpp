#pragma once

#include <vector>

#include "sgm3d/data_io.hpp"

namespace sgm3d {

enum class Difficulty { Easy, Moderate, Hard, None };

enum class ApCriterion { Ap3D, ApBev };

struct EvalConfig {
  double iou_threshold = 0.7;
  ApCriterion criterion = ApCriterion::Ap3D;
  Category category = Category::Car;
  int recall_points = 40;
};

/// KITTI devkit strata by 2D box height, occlusion, and truncation.
Difficulty difficulty_bucket(const GroundTruthObject& gt);

/// 40-point interpolated average precision over the given difficulty
/// bucket. Predictions and ground truth align by frame_id; each ground
/// truth matches at most one prediction. False positives overlapping a
/// DontCare footprint in BEV are discarded.
double compute_ap(const std::vector<PredictionRecord>& preds,
                  const std::vector<std::pair<std::string, GroundTruthObject>>& gts,
                  const EvalConfig& cfg, Difficulty bucket);

}  // namespace sgm3d
