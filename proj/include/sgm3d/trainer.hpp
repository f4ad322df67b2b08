#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgm3d/anchors.hpp"
#include "sgm3d/data_io.hpp"
#include "sgm3d/encoders.hpp"
#include "sgm3d/evaluator.hpp"
#include "sgm3d/losses.hpp"
#include "sgm3d/matcher.hpp"

namespace sgm3d {

/// Desk-scale synthetic world: a ground plane plus 1-6 car-like boxes seen
/// by a forward-facing camera.
struct SceneConfig {
  BevGridSpec spec{0.0, 16.0, -8.0, 8.0, -3.0, 1.0, 1.0};
  CameraIntrinsics cam{32.0, 32.0, 16.0, 12.0, 0.54};
  int img_w = 32;
  int img_h = 24;
  int depth_bins = 16;
  double depth_near = 1.0;
  double depth_far = 17.0;
  // Sparse direct depth supervision plus a noisy monocular depth cue keep
  // the mono branch weak enough that guidance from the stereo branch has
  // measurable headroom.
  int depth_stride = 8;          // supervise every Nth pixel per axis
  double camera_height = 2.2;    // meters above ground; above the boxes so their tops are visible
  double stereo_depth_sigma = 0.2;
  double mono_depth_rel_sigma = 0.35;  // relative error of the mono depth cue
  int rbf_channels = 8;
  double rbf_sigma = 2.0;
  int min_boxes = 1;
  int max_boxes = 6;
};

struct SyntheticScene {
  std::string id;
  std::vector<ClassedBox> gt_boxes;
  DepthRaster true_depth;
  DepthRaster stereo_depth;
  std::vector<double> image_feats;  // channel-major, c_img * npix
  std::vector<int> depth_targets;   // per pixel, -1 = unsupervised
};

struct DetectionHeadParams {
  int c_in = 0;
  int per_cell = 0;   // anchors per BEV cell
  int classes = 0;    // including background
  std::vector<double> w_cls, b_cls;  // per_cell*classes x c_in / per_cell*classes
  std::vector<double> w_reg, b_reg;  // per_cell*7 x c_in
  std::vector<double> w_dir, b_dir;  // per_cell x c_in

  DetectionHeadParams() = default;
  DetectionHeadParams(int cin, int k, int cls)
      : c_in(cin), per_cell(k), classes(cls),
        w_cls(static_cast<std::size_t>(k) * cls * cin, 0.0),
        b_cls(static_cast<std::size_t>(k) * cls, 0.0),
        w_reg(static_cast<std::size_t>(k) * 7 * cin, 0.0),
        b_reg(static_cast<std::size_t>(k) * 7, 0.0),
        w_dir(static_cast<std::size_t>(k) * cin, 0.0), b_dir(k, 0.0) {}
};

struct BranchParams {
  LinearHeadParams head;        // encoder linear head
  LinearHeadParams depth_head;  // mono only: c_img -> depth bins per pixel
  DetectionHeadParams det;

  /// Flat copy of every parameter, for trajectory comparisons.
  std::vector<double> flatten() const;
};

struct BranchOutputs {
  BevFeatureMap features;
  std::vector<double> cls_logits;  // A x classes
  std::vector<double> res;         // A x 7
  std::vector<double> dir;         // A
  std::vector<double> depth_logits;  // mono only
  MonoBevResult mono;                // mono only
};

struct TrainerContext {
  SceneConfig scfg;
  AnchorGrid grid;
  AssignConfig assign_cfg;
  int c_img = 0;  // 2 + rbf_channels
  int c_out = 8;
  int num_classes = 1;
};

TrainerContext make_trainer_context(const SceneConfig& scfg = {}, int c_out = 8);

std::vector<SyntheticScene> generate_scenes(const TrainerContext& ctx,
                                            std::uint64_t seed, int n);

BranchParams init_stereo_params(const TrainerContext& ctx, std::uint64_t seed);
BranchParams init_mono_params(const TrainerContext& ctx, std::uint64_t seed);

BranchOutputs stereo_forward(const TrainerContext& ctx,
                             const SyntheticScene& scene,
                             const BranchParams& params);
BranchOutputs mono_forward(const TrainerContext& ctx,
                           const SyntheticScene& scene,
                           const BranchParams& params);

struct TrainConfig {
  int stereo_epochs = 120;
  int epochs = 50;
  double stereo_lr = 0.05;
  double lr = 0.01;
  LossWeights weights;
  bool enable_sgm = true;
  bool enable_feature = true;
  bool enable_anchor = true;
  bool enable_object = true;
  std::uint64_t seed = 7;
  double score_thresh = 0.1;
  double min_iou = 0.25;
  int max_matched = 16;  // predictions per branch fed to IoU matching
  std::string log_path;
};

struct EpochLog {
  int epoch = 0;
  double feature = 0.0;
  double anchor = 0.0;
  double iou_ma = 0.0;
  double det = 0.0;
  double ap = -1.0;  // only evaluated on the final epoch
};

struct TrainResult {
  BranchParams stereo;
  BranchParams mono;
  std::vector<EpochLog> log;
  double final_ap = -1.0;
};

struct DivergenceDetected : std::runtime_error {
  int epoch;
  explicit DivergenceDetected(int e)
      : std::runtime_error("non-finite loss at epoch " + std::to_string(e)),
        epoch(e) {}
};

/// Phase 1 trains the stereo branch on the detection loss; phase 2 freezes
/// it as the teacher and trains the monocular branch on the configured
/// total loss with plain per-scene gradient descent. A non-null
/// `pretrained_stereo` skips phase 1 and adopts the given teacher; passing
/// the stereo result of an equal-seed run reproduces phase 2 exactly.
TrainResult run_training(const TrainerContext& ctx,
                         const std::vector<SyntheticScene>& scenes,
                         const TrainConfig& cfg,
                         const BranchParams* pretrained_stereo = nullptr);

struct ScoredBoxes {
  std::vector<Box3D> boxes;
  std::vector<double> scores;        // foreground probability
  std::vector<std::size_t> anchors;  // source anchor per box
};

/// Decoded, score-filtered, NMS-pruned predictions of one branch.
ScoredBoxes decode_predictions(const TrainerContext& ctx,
                               const BranchOutputs& out, double score_thresh,
                               double nms_iou, int max_keep);

/// Mean Eq.-1-style masked feature distance between the two branches over
/// a scene set (held-out diagnostics).
double mean_masked_feature_distance(const TrainerContext& ctx,
                                    const std::vector<SyntheticScene>& scenes,
                                    const BranchParams& stereo,
                                    const BranchParams& mono);

/// BEV average precision of the monocular branch over a scene set.
double evaluate_bev_ap(const TrainerContext& ctx,
                       const std::vector<SyntheticScene>& scenes,
                       const BranchParams& mono, double iou_thresh = 0.5);

}  // namespace sgm3d
