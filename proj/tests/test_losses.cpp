#include <algorithm>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "sgm3d/losses.hpp"

using namespace sgm3d;

namespace {

std::vector<double> randu(std::mt19937_64& rng, std::size_t n, double lo,
                          double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("feature_da_loss worked values") {
  BevFeatureMap fm(1, 1, 1), fs(1, 1, 1);
  BevMask mask(1, 1);
  mask.at(0, 0) = 1;
  fm.at(0, 0, 0) = 3.0;
  fs.at(0, 0, 0) = 1.0;
  LossValueGrad r = feature_da_loss(fm, fs, mask);
  CHECK(r.value == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(r.grads.at("F_M")[0] == doctest::Approx(4.0).epsilon(1e-12));

  // Identical features -> zero; zero mask -> zero.
  LossValueGrad z = feature_da_loss(fm, fm, mask);
  CHECK(z.value == 0.0);
  BevMask off(1, 1);
  CHECK(feature_da_loss(fm, fs, off).value == 0.0);

  BevFeatureMap wrong(2, 1, 1);
  CHECK_THROWS_AS(feature_da_loss(fm, wrong, mask), std::invalid_argument);

  // Raw-sum mode keeps the unnormalized value.
  BevFeatureMap fm2(2, 2, 2), fs2(2, 2, 2);
  BevMask m2(2, 2);
  m2.at(0, 0) = m2.at(1, 1) = 1;
  fm2.at(0, 0, 0) = 1.0;
  fm2.at(1, 1, 1) = -2.0;
  LossValueGrad raw = feature_da_loss(fm2, fs2, m2, false);
  LossValueGrad nrm = feature_da_loss(fm2, fs2, m2, true);
  CHECK(raw.value == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(nrm.value == doctest::Approx(5.0 / (2 * 2)).epsilon(1e-12));
}

TEST_CASE("feature_da_loss matches a direct oracle and passes gradcheck") {
  std::mt19937_64 rng(41);
  for (int it = 0; it < 20; ++it) {
    const int c = 2, h = 4, w = 4;
    BevFeatureMap fm(c, h, w), fs(c, h, w);
    BevMask mask(h, w);
    for (auto& x : fm.v) x = randu(rng, 1, -2, 2)[0];
    for (auto& x : fs.v) x = randu(rng, 1, -2, 2)[0];
    for (auto& x : mask.v) x = static_cast<std::uint8_t>(rng() % 2);

    double expect = 0.0;
    std::size_t on = mask.count();
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          if (mask.at(i, j)) {
            double d = fm.at(ch, i, j) - fs.at(ch, i, j);
            expect += d * d;
          }
    expect /= std::max<double>(1.0, static_cast<double>(c) * on);

    LossValueGrad r = feature_da_loss(fm, fs, mask);
    CHECK(r.value == doctest::Approx(expect).epsilon(1e-12));

    auto f = [&](const std::vector<double>& x) {
      BevFeatureMap m2 = fm;
      m2.v = x;
      return feature_da_loss(m2, fs, mask).value;
    };
    GradCheckReport rep = check_gradient(f, fm.v, r.grads.at("F_M"), 1e-6);
    CHECK(rep.max_rel_err < 1e-6);
    CHECK(r.grads.count("F_S") == 0);  // teacher is detached
  }
}

TEST_CASE("anchor_da_loss worked value and conventions") {
  LossWeights w;
  // One fg anchor, stereo logits (ln 2, 0), mono logits (0, 0), bg empty.
  std::vector<double> lm = {0.0, 0.0};
  std::vector<double> ls = {std::log(2.0), 0.0};
  LossValueGrad r = anchor_da_loss(lm, ls, 2, {0}, {}, w);
  const double expect = (2.0 / 3) * std::log(4.0 / 3) + (1.0 / 3) * std::log(2.0 / 3);
  CHECK(r.value == doctest::Approx(expect).epsilon(1e-12));
  CHECK(r.value == doctest::Approx(0.05663).epsilon(1e-4));
  // dKL/dz_M = softmax(M) - softmax(S), divided by |fg|.
  CHECK(r.grads.at("logits_M")[0] == doctest::Approx(0.5 - 2.0 / 3).epsilon(1e-12));
  CHECK(r.grads.at("logits_M")[1] == doctest::Approx(0.5 - 1.0 / 3).epsilon(1e-12));

  // Identical logits -> 0.
  CHECK(anchor_da_loss(ls, ls, 2, {0}, {}, w).value == doctest::Approx(0.0));
  // Empty foreground -> 0 by convention, even with background anchors.
  CHECK(anchor_da_loss(lm, ls, 2, {}, {0}, w).value == 0.0);
  // lambda_bg = 0 removes the bg contribution exactly.
  std::vector<double> lm2 = {0.0, 0.0, 1.0, -1.0};
  std::vector<double> ls2 = {std::log(2.0), 0.0, -0.5, 0.5};
  LossWeights nobg = w;
  nobg.bg = 0.0;
  CHECK(anchor_da_loss(lm2, ls2, 2, {0}, {1}, nobg).value ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("anchor_da_loss oracle, normalizer modes and properties") {
  std::mt19937_64 rng(43);
  LossWeights w;
  for (int it = 0; it < 30; ++it) {
    const int k = 3;
    const std::size_t n = 6;
    std::vector<double> lm = randu(rng, n * k, -2, 2);
    std::vector<double> ls = randu(rng, n * k, -2, 2);
    std::vector<std::size_t> fg = {0, 2}, bg = {1, 3, 4};

    auto oracle = [&](double bg_denom) {
      double sum_fg = 0.0, sum_bg = 0.0;
      for (std::size_t a : fg) {
        std::vector<double> s(ls.begin() + a * k, ls.begin() + (a + 1) * k);
        std::vector<double> m(lm.begin() + a * k, lm.begin() + (a + 1) * k);
        sum_fg += oracles::kl_div(oracles::softmax(s), oracles::softmax(m));
      }
      for (std::size_t a : bg) {
        std::vector<double> s(ls.begin() + a * k, ls.begin() + (a + 1) * k);
        std::vector<double> m(lm.begin() + a * k, lm.begin() + (a + 1) * k);
        sum_bg += oracles::kl_div(oracles::softmax(s), oracles::softmax(m));
      }
      return w.fg * sum_fg / fg.size() + w.bg * sum_bg / bg_denom;
    };

    LossValueGrad r = anchor_da_loss(lm, ls, k, fg, bg, w);
    CHECK(r.value == doctest::Approx(oracle(fg.size())).epsilon(1e-12));
    CHECK(r.value >= 0.0);

    LossValueGrad rb =
        anchor_da_loss(lm, ls, k, fg, bg, w, BgNormalizer::Background);
    CHECK(rb.value == doctest::Approx(oracle(bg.size())).epsilon(1e-12));

    // Permutation invariance over anchor enumeration order.
    std::vector<std::size_t> fg2 = {2, 0}, bg2 = {4, 1, 3};
    CHECK(anchor_da_loss(lm, ls, k, fg2, bg2, w).value ==
          doctest::Approx(r.value).epsilon(1e-14));

    auto f = [&](const std::vector<double>& x) {
      return anchor_da_loss(x, ls, k, fg, bg, w).value;
    };
    GradCheckReport rep = check_gradient(f, lm, r.grads.at("logits_M"), 1e-6);
    CHECK(rep.max_rel_err < 1e-6);
  }
}

TEST_CASE("smooth_l1 branches") {
  CHECK(smooth_l1(0.5) == doctest::Approx(0.125));
  CHECK(smooth_l1(-0.5) == doctest::Approx(0.125));
  CHECK(smooth_l1(2.0) == doctest::Approx(1.5));
  CHECK(smooth_l1(-2.0) == doctest::Approx(1.5));
  CHECK(smooth_l1_grad(0.5) == doctest::Approx(0.5));
  CHECK(smooth_l1_grad(2.0) == doctest::Approx(1.0));
  CHECK(smooth_l1_grad(-2.0) == doctest::Approx(-1.0));
}

TEST_CASE("truncate_score clips the sigmoid") {
  CHECK(truncate_score(0.0) == doctest::Approx(0.5));
  CHECK(truncate_score(100.0) == doctest::Approx(1.0 - 1e-4));
  CHECK(truncate_score(-100.0) == doctest::Approx(1e-4));
}

TEST_CASE("object_cls_loss worked value, empty case, gradcheck") {
  // One pair with truncated scores 0.9 vs 0.4 -> 0.5*(0.5)^2 = 0.125.
  auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  LossValueGrad r = object_cls_loss({logit(0.9)}, {logit(0.4)});
  CHECK(r.value == doctest::Approx(0.125).epsilon(1e-10));

  CHECK(object_cls_loss({}, {}).value == 0.0);
  CHECK(object_cls_loss({logit(0.7)}, {logit(0.7)}).value ==
        doctest::Approx(0.0));
  CHECK_THROWS_AS(object_cls_loss({0.0}, {}), std::invalid_argument);

  // A clipped score contributes zero gradient.
  LossValueGrad clipped = object_cls_loss({100.0}, {0.0});
  CHECK(clipped.grads.at("scores_M")[0] == 0.0);

  std::mt19937_64 rng(47);
  for (int it = 0; it < 20; ++it) {
    std::vector<double> sm = randu(rng, 5, -3, 3);
    std::vector<double> ss = randu(rng, 5, -3, 3);
    double expect = 0.0;
    for (int i = 0; i < 5; ++i)
      expect += oracles::smooth_l1(truncate_score(sm[i]) - truncate_score(ss[i]));
    expect /= 5.0;
    LossValueGrad v = object_cls_loss(sm, ss);
    CHECK(v.value == doctest::Approx(expect).epsilon(1e-12));
    auto f = [&](const std::vector<double>& x) {
      return object_cls_loss(x, ss).value;
    };
    GradCheckReport rep = check_gradient(f, sm, v.grads.at("scores_M"), 1e-6);
    CHECK(rep.max_rel_err < 1e-6);
  }
}

TEST_CASE("object_box_loss worked values and gradcheck") {
  ResidualVector a{}, b{};
  CHECK(object_box_loss({a}, {a}).value == 0.0);
  a.v[0] = 0.5;
  CHECK(object_box_loss({a}, {b}).value == doctest::Approx(0.25).epsilon(1e-12));

  // Two pairs with squared norms 1 and 3 -> mean 2.
  ResidualVector m1{}, m2{};
  m1.v[0] = 1.0;
  m2.v[1] = 1.0;
  m2.v[2] = std::sqrt(2.0);
  CHECK(object_box_loss({m1, m2}, {b, b}).value ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(object_box_loss({}, {}).value == 0.0);

  std::mt19937_64 rng(53);
  for (int it = 0; it < 20; ++it) {
    std::vector<ResidualVector> rm(4), rs(4);
    for (auto& r : rm)
      for (int c = 0; c < 7; ++c) r.v[c] = randu(rng, 1, -1, 1)[0];
    for (auto& r : rs)
      for (int c = 0; c < 7; ++c) r.v[c] = randu(rng, 1, -1, 1)[0];
    LossValueGrad v = object_box_loss(rm, rs);
    std::vector<double> flat(4 * 7);
    for (int i = 0; i < 4; ++i)
      for (int c = 0; c < 7; ++c) flat[i * 7 + c] = rm[i][c];
    auto f = [&](const std::vector<double>& x) {
      std::vector<ResidualVector> r2(4);
      for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 7; ++c) r2[i].v[c] = x[i * 7 + c];
      return object_box_loss(r2, rs).value;
    };
    GradCheckReport rep = check_gradient(f, flat, v.grads.at("res_M"), 1e-6);
    CHECK(rep.max_rel_err < 1e-6);
  }
}

TEST_CASE("depth_focal_loss worked values") {
  LossWeights w;
  // Single pixel, two bins, p_t = 0.5.
  LossValueGrad r = depth_focal_loss({0.0, 0.0}, {0}, 2, w);
  const double expect = 0.25 * 0.25 * std::log(2.0);
  CHECK(r.value == doctest::Approx(expect).epsilon(1e-12));
  CHECK(r.value == doctest::Approx(0.04332).epsilon(1e-3));

  // Near-perfect prediction -> near zero.
  CHECK(depth_focal_loss({50.0, 0.0}, {0}, 2, w).value ==
        doctest::Approx(0.0).epsilon(1e-9));

  // gamma=0, alpha=1 reduces to mean cross-entropy.
  LossWeights ce = w;
  ce.focal_alpha = 1.0;
  ce.focal_gamma = 0.0;
  std::mt19937_64 rng(59);
  std::vector<double> logits = randu(rng, 3 * 4, -2, 2);
  std::vector<int> targets = {0, 3, 1};
  LossValueGrad v = depth_focal_loss(logits, targets, 4, ce);
  double nll = 0.0;
  for (int p = 0; p < 3; ++p) {
    std::vector<double> row(logits.begin() + p * 4, logits.begin() + (p + 1) * 4);
    nll -= std::log(oracles::softmax(row)[targets[p]]);
  }
  CHECK(v.value == doctest::Approx(nll / 3).epsilon(1e-12));

  // Unsupervised pixels (target -1) are skipped.
  LossValueGrad skip = depth_focal_loss(logits, {0, -1, 1}, 4, w);
  std::vector<double> two(logits.begin(), logits.begin() + 4);
  two.insert(two.end(), logits.begin() + 8, logits.begin() + 12);
  LossValueGrad direct = depth_focal_loss(two, {0, 1}, 4, w);
  CHECK(skip.value == doctest::Approx(direct.value).epsilon(1e-12));
  for (int b = 0; b < 4; ++b)
    CHECK(skip.grads.at("depth_logits")[4 + b] == 0.0);

  CHECK_THROWS_AS(depth_focal_loss(logits, {0, 4, 1}, 4, w), std::out_of_range);
}

TEST_CASE("depth_focal_loss oracle and gradcheck") {
  LossWeights w;
  std::mt19937_64 rng(61);
  for (int it = 0; it < 20; ++it) {
    const int bins = 5, npix = 6;
    std::vector<double> logits = randu(rng, npix * bins, -2, 2);
    std::vector<int> targets(npix);
    for (auto& t : targets) t = static_cast<int>(rng() % (bins + 1)) - 1;
    std::size_t sup = 0;
    double expect = 0.0;
    for (int p = 0; p < npix; ++p) {
      if (targets[p] < 0) continue;
      ++sup;
      std::vector<double> row(logits.begin() + p * bins,
                              logits.begin() + (p + 1) * bins);
      expect += oracles::focal_term(oracles::softmax(row)[targets[p]],
                                    w.focal_alpha, w.focal_gamma);
    }
    if (sup) expect /= static_cast<double>(sup);
    LossValueGrad v = depth_focal_loss(logits, targets, bins, w);
    CHECK(v.value == doctest::Approx(expect).epsilon(1e-12));
    auto f = [&](const std::vector<double>& x) {
      return depth_focal_loss(x, targets, bins, w).value;
    };
    GradCheckReport rep =
        check_gradient(f, logits, v.grads.at("depth_logits"), 1e-6);
    CHECK(rep.max_rel_err < 1e-6);
  }
}

TEST_CASE("detection_task_loss conventions and gradcheck") {
  LossWeights w;
  const int nc = 1, k = 2;

  // Two anchors: one fg (class 1, direction 1), one bg.
  Assignment assign;
  assign.fg = {0};
  assign.bg = {1};
  AnchorTarget t;
  t.class_id = 1;
  t.direction = 1;
  for (int c = 0; c < 7; ++c) t.residual.v[c] = 0.1 * c;
  assign.targets[0] = t;

  std::mt19937_64 rng(67);
  std::vector<double> cls = randu(rng, 2 * k, -1, 1);
  std::vector<double> res = randu(rng, 2 * 7, -1, 1);
  std::vector<double> dir = randu(rng, 2, -1, 1);
  LossValueGrad depth = depth_focal_loss({0.3, -0.2, 0.1, 0.0}, {1, 0}, 2, w);

  LossValueGrad v = detection_task_loss(cls, nc, assign, res, dir, depth, w);

  // Direct oracle.
  auto row_focal = [&](const std::vector<double>& z, int tgt) {
    return oracles::focal_term(oracles::softmax(z)[tgt], w.focal_alpha,
                               w.focal_gamma);
  };
  double l_cls = row_focal({cls[0], cls[1]}, 1) + row_focal({cls[2], cls[3]}, 0);
  double l_box = 0.0;
  for (int c = 0; c < 7; ++c) l_box += oracles::smooth_l1(res[c] - t.residual[c]);
  double s = 1.0 / (1.0 + std::exp(-dir[0]));
  double l_dir = -std::log(s);
  double expect = (w.cls * l_cls + w.box * l_box + w.dir * l_dir) / 1.0 +
                  w.depth * depth.value;
  CHECK(v.value == doctest::Approx(expect).epsilon(1e-12));

  // Doubling lambda_box doubles exactly the box term's contribution.
  LossWeights w2 = w;
  w2.box *= 2.0;
  LossValueGrad v2 = detection_task_loss(cls, nc, assign, res, dir, depth, w2);
  CHECK(v2.value - v.value == doctest::Approx(w.box * l_box).epsilon(1e-9));

  // Zero fg anchors: background focal with normalizer 1 plus the depth term.
  Assignment none;
  none.bg = {0, 1};
  LossValueGrad v0 = detection_task_loss(cls, nc, none, res, dir, depth, w);
  double bg_only = w.cls * (row_focal({cls[0], cls[1]}, 0) +
                            row_focal({cls[2], cls[3]}, 0));
  CHECK(v0.value == doctest::Approx(bg_only + w.depth * depth.value).epsilon(1e-12));

  // Gradient checks on all three heads.
  auto fc = [&](const std::vector<double>& x) {
    return detection_task_loss(x, nc, assign, res, dir, depth, w).value;
  };
  CHECK(check_gradient(fc, cls, v.grads.at("cls_logits"), 1e-6).max_rel_err <
        1e-6);
  auto fr = [&](const std::vector<double>& x) {
    return detection_task_loss(cls, nc, assign, x, dir, depth, w).value;
  };
  CHECK(check_gradient(fr, res, v.grads.at("res_pred"), 1e-6).max_rel_err <
        1e-6);
  auto fd = [&](const std::vector<double>& x) {
    return detection_task_loss(cls, nc, assign, res, x, depth, w).value;
  };
  CHECK(check_gradient(fd, dir, v.grads.at("dir_logits"), 1e-6).max_rel_err <
        1e-6);

  CHECK_THROWS_AS(
      detection_task_loss(randu(rng, 3, -1, 1), nc, assign, res, dir, depth, w),
      std::invalid_argument);
}

TEST_CASE("compose_total mirrors the weighted decomposition") {
  LossWeights w;
  LossValueGrad feature, anchor, ocls, obox, det;
  feature.value = 2.0;
  feature.grads["F_M"] = {1.0, -1.0};
  anchor.value = 3.0;
  anchor.grads["logits_M"] = {0.5};
  ocls.value = 0.4;
  ocls.grads["scores_M"] = {2.0};
  obox.value = 0.6;
  obox.grads["res_M"] = {-3.0};
  det.value = 1.5;
  det.grads["cls_logits"] = {0.25};

  TotalLoss t = compose_total(feature, anchor, ocls, obox, det, w);
  CHECK(t.mg_da == doctest::Approx(0.1 * 2.0 + 1.0 * 3.0).epsilon(1e-12));
  CHECK(t.mg_da == doctest::Approx(3.2).epsilon(1e-12));
  CHECK(t.iou_ma == doctest::Approx(0.01 * 1.0).epsilon(1e-12));
  CHECK(t.sgm == doctest::Approx(t.mg_da + t.iou_ma).epsilon(1e-12));
  CHECK(t.total.value == doctest::Approx(t.sgm + det.value).epsilon(1e-12));
  CHECK(t.total.grads.at("F_M")[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(t.total.grads.at("logits_M")[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(t.total.grads.at("scores_M")[0] == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(t.total.grads.at("res_M")[0] == doctest::Approx(-0.03).epsilon(1e-12));
  CHECK(t.total.grads.at("cls_logits")[0] == doctest::Approx(0.25).epsilon(1e-12));

  // lambda_object = 0 removes the matching term exactly.
  LossWeights w0 = w;
  w0.object = 0.0;
  TotalLoss t0 = compose_total(feature, anchor, ocls, obox, det, w0);
  CHECK(t0.total.value == doctest::Approx(t0.mg_da + det.value).epsilon(1e-12));

  // All-zero parts give zero.
  LossValueGrad z;
  TotalLoss tz = compose_total(z, z, z, z, z, w);
  CHECK(tz.total.value == 0.0);
}

TEST_CASE("check_gradient validates linear functions and detects faults") {
  // Linear function: central differences are exact up to rounding.
  std::vector<double> x = {1.0, -2.0, 0.5};
  std::vector<double> coeffs = {3.0, -1.0, 2.0};
  auto f = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += coeffs[i] * v[i];
    return s;
  };
  CHECK(check_gradient(f, x, coeffs, 1e-6).max_rel_err < 1e-9);

  // A +10% corrupted gradient is flagged at ~0.1 relative error.
  std::vector<double> bad = coeffs;
  bad[1] *= 1.1;
  GradCheckReport rep = check_gradient(f, x, bad, 1e-6);
  CHECK(rep.max_rel_err == doctest::Approx(0.1 / 1.1).epsilon(1e-3));
  CHECK(rep.worst_index == 1);

  auto nf = [](const std::vector<double>& v) { return std::log(v[0]); };
  CHECK_THROWS(check_gradient(nf, {-0.5e-7}, {1.0}, 1e-6));
}
