#include <random>

#include "doctest.h"
#include "sgm3d/trainer.hpp"

using namespace sgm3d;

namespace {

bool same_vec(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("generate_scenes is deterministic and in range") {
  TrainerContext ctx = make_trainer_context();
  auto a = generate_scenes(ctx, 7, 6);
  auto b = generate_scenes(ctx, 7, 6);
  REQUIRE(a.size() == 6);
  for (std::size_t s = 0; s < a.size(); ++s) {
    CHECK(a[s].id == b[s].id);
    CHECK(a[s].gt_boxes.size() == b[s].gt_boxes.size());
    CHECK(a[s].true_depth.values == b[s].true_depth.values);
    CHECK(a[s].stereo_depth.values == b[s].stereo_depth.values);
    CHECK(a[s].image_feats == b[s].image_feats);
    CHECK(a[s].depth_targets == b[s].depth_targets);
  }
  auto c = generate_scenes(ctx, 8, 6);
  bool any_diff = false;
  for (std::size_t s = 0; s < a.size(); ++s)
    any_diff |= a[s].true_depth.values != c[s].true_depth.values;
  CHECK(any_diff);

  const int npix = ctx.scfg.img_w * ctx.scfg.img_h;
  for (const auto& scene : a) {
    CHECK(scene.gt_boxes.size() >= 1);
    CHECK(scene.gt_boxes.size() <= 6);
    for (const auto& g : scene.gt_boxes) {
      CHECK(g.box.x >= 3.0);
      CHECK(g.box.x <= 14.0);
      CHECK(g.box.y >= -6.0);
      CHECK(g.box.y <= 6.0);
      CHECK(g.class_id == 1);
    }
    // Boxes are clash-free in BEV.
    for (std::size_t i = 0; i < scene.gt_boxes.size(); ++i)
      for (std::size_t j = i + 1; j < scene.gt_boxes.size(); ++j)
        CHECK(iou_bev(scene.gt_boxes[i].box, scene.gt_boxes[j].box) <= 0.01);

    CHECK(scene.true_depth.values.size() == static_cast<std::size_t>(npix));
    CHECK(scene.image_feats.size() ==
          static_cast<std::size_t>(ctx.c_img) * npix);
    REQUIRE(scene.depth_targets.size() == static_cast<std::size_t>(npix));
    for (int v = 0; v < ctx.scfg.img_h; ++v) {
      for (int u = 0; u < ctx.scfg.img_w; ++u) {
        int t = scene.depth_targets[v * ctx.scfg.img_w + u];
        CHECK(t >= -1);
        CHECK(t < ctx.scfg.depth_bins);
        if (v % ctx.scfg.depth_stride || u % ctx.scfg.depth_stride)
          CHECK(t == -1);  // only stride-aligned pixels are supervised
      }
    }
  }
}

TEST_CASE("branch forwards produce consistently shaped outputs") {
  TrainerContext ctx = make_trainer_context();
  auto scenes = generate_scenes(ctx, 3, 1);
  BranchParams sp = init_stereo_params(ctx, 11);
  BranchParams mp = init_mono_params(ctx, 11);

  const std::size_t n_anchors = ctx.grid.anchors.size();
  BranchOutputs so = stereo_forward(ctx, scenes[0], sp);
  CHECK(so.cls_logits.size() == n_anchors * (ctx.num_classes + 1));
  CHECK(so.res.size() == n_anchors * 7);
  CHECK(so.dir.size() == n_anchors);
  CHECK(so.features.channels == ctx.c_out);

  BranchOutputs mo = mono_forward(ctx, scenes[0], mp);
  CHECK(mo.cls_logits.size() == n_anchors * (ctx.num_classes + 1));
  CHECK(mo.features.channels == ctx.c_out);
  CHECK(mo.depth_logits.size() ==
        static_cast<std::size_t>(ctx.scfg.depth_bins) * ctx.scfg.img_w *
            ctx.scfg.img_h);
  for (double v : mo.features.v) CHECK(std::isfinite(v));

  // Forward passes are pure: a second call is bit-identical.
  BranchOutputs mo2 = mono_forward(ctx, scenes[0], mp);
  CHECK(same_vec(mo.features.v, mo2.features.v));
}

TEST_CASE("decode_predictions respects score filter and keep cap") {
  TrainerContext ctx = make_trainer_context();
  auto scenes = generate_scenes(ctx, 5, 1);
  TrainConfig cfg;
  cfg.stereo_epochs = 10;
  cfg.epochs = 2;
  TrainResult r = run_training(ctx, scenes, cfg);

  BranchOutputs so = stereo_forward(ctx, scenes[0], r.stereo);
  ScoredBoxes sb = decode_predictions(ctx, so, 0.1, 0.5, 8);
  CHECK(sb.boxes.size() == sb.scores.size());
  CHECK(sb.boxes.size() == sb.anchors.size());
  CHECK(sb.boxes.size() <= 8);
  for (double s : sb.scores) {
    CHECK(s >= 0.1);
    CHECK(s <= 1.0);
  }
  // NMS post-condition: kept boxes pairwise below the IoU threshold.
  for (std::size_t i = 0; i < sb.boxes.size(); ++i)
    for (std::size_t j = i + 1; j < sb.boxes.size(); ++j)
      CHECK(iou_bev(sb.boxes[i], sb.boxes[j]) <= 0.5 + 1e-12);
}

TEST_CASE("stereo teacher is frozen during phase 2") {
  TrainerContext ctx = make_trainer_context();
  auto scenes = generate_scenes(ctx, 7, 4);
  TrainConfig on;
  on.stereo_epochs = 5;
  on.epochs = 3;
  TrainConfig off = on;
  off.enable_sgm = false;

  TrainResult ra = run_training(ctx, scenes, on);
  TrainResult rb = run_training(ctx, scenes, off);
  // The mono phase differs, but the stereo branch must be identical.
  CHECK(same_vec(ra.stereo.flatten(), rb.stereo.flatten()));
}

TEST_CASE("zero adaptation weights reproduce the baseline trajectory") {
  TrainerContext ctx = make_trainer_context();
  auto scenes = generate_scenes(ctx, 7, 4);
  TrainConfig base;
  base.stereo_epochs = 5;
  base.epochs = 4;
  base.enable_sgm = false;

  TrainConfig zero = base;
  zero.enable_sgm = true;
  zero.weights.feature = 0.0;
  zero.weights.anchor = 0.0;
  zero.weights.object = 0.0;

  TrainResult ra = run_training(ctx, scenes, base);
  TrainResult rb = run_training(ctx, scenes, zero);
  CHECK(same_vec(ra.mono.flatten(), rb.mono.flatten()));
  CHECK(same_vec(ra.stereo.flatten(), rb.stereo.flatten()));
}

TEST_CASE("training runs log finite per-epoch losses") {
  TrainerContext ctx = make_trainer_context();
  auto scenes = generate_scenes(ctx, 7, 4);
  TrainConfig cfg;
  cfg.stereo_epochs = 5;
  cfg.epochs = 3;
  TrainResult r = run_training(ctx, scenes, cfg);
  REQUIRE(static_cast<int>(r.log.size()) == cfg.epochs);
  for (const auto& e : r.log) {
    CHECK(std::isfinite(e.feature));
    CHECK(std::isfinite(e.anchor));
    CHECK(std::isfinite(e.iou_ma));
    CHECK(std::isfinite(e.det));
    CHECK(e.feature >= 0.0);
    CHECK(e.anchor >= 0.0);
  }
  CHECK(r.final_ap >= 0.0);
  CHECK(r.final_ap <= 1.0);

  double dist = mean_masked_feature_distance(ctx, scenes, r.stereo, r.mono);
  CHECK(std::isfinite(dist));
  CHECK(dist >= 0.0);
}
