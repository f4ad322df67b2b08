// Command-line front end: file conversion, loss evaluation, gradient
// checking, the synthetic training demo, AP evaluation, and heatmap export.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 gradient-check
// failure.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgm3d/anchors.hpp"
#include "sgm3d/boxes.hpp"
#include "sgm3d/data_io.hpp"
#include "sgm3d/encoders.hpp"
#include "sgm3d/evaluator.hpp"
#include "sgm3d/geometry.hpp"
#include "sgm3d/heatmap.hpp"
#include "sgm3d/losses.hpp"
#include "sgm3d/matcher.hpp"
#include "sgm3d/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sgm3d;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int worker_cap() {
  const char* env = std::getenv("SGM3D_THREADS");
  if (env == nullptr || *env == '\0') {
    return std::max(1u, std::thread::hardware_concurrency());
  }
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == nullptr || *end != '\0' || v < 1) {
    throw UsageError("SGM3D_THREADS must be a positive integer");
  }
  return static_cast<int>(v);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << bytes;
}

// ---------------------------------------------------------------------------
// Loss weights: defaults, config file (key=value, '#' comments), --weights.

const std::set<std::string> kWeightKeys = {
    "lambda_feature", "lambda_anchor", "lambda_object", "lambda_fg",
    "lambda_bg",      "lambda_cls",    "lambda_box",    "lambda_dir",
    "lambda_depth",   "focal_alpha",   "focal_gamma"};

std::string normalize_key(std::string key) {
  // Accept the Greek spelling of the weight names.
  const std::string lam = "λ_";
  if (key.rfind(lam, 0) == 0) key = "lambda_" + key.substr(lam.size());
  return key;
}

void set_weight(LossWeights& w, const std::string& raw_key, double value) {
  const std::string key = normalize_key(raw_key);
  if (kWeightKeys.count(key) == 0) {
    throw UsageError("unknown weight key: " + raw_key);
  }
  if (key == "lambda_feature") w.feature = value;
  else if (key == "lambda_anchor") w.anchor = value;
  else if (key == "lambda_object") w.object = value;
  else if (key == "lambda_fg") w.fg = value;
  else if (key == "lambda_bg") w.bg = value;
  else if (key == "lambda_cls") w.cls = value;
  else if (key == "lambda_box") w.box = value;
  else if (key == "lambda_dir") w.dir = value;
  else if (key == "lambda_depth") w.depth = value;
  else if (key == "focal_alpha") w.focal_alpha = value;
  else if (key == "focal_gamma") w.focal_gamma = value;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::pair<std::string, double> split_kv(const std::string& kv) {
  const std::size_t eq = kv.find('=');
  if (eq == std::string::npos) throw UsageError("expected key=value: " + kv);
  const std::string key = trim(kv.substr(0, eq));
  const std::string val = trim(kv.substr(eq + 1));
  try {
    std::size_t used = 0;
    const double v = std::stod(val, &used);
    if (used != val.size()) throw std::invalid_argument(val);
    return {key, v};
  } catch (const std::exception&) {
    throw UsageError("not a number in " + kv);
  }
}

void apply_config_file(LossWeights& w, const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const auto [key, value] = split_kv(line.substr(first, last - first + 1));
    set_weight(w, key, value);
  }
}

LossWeights resolve_weights(const std::string& config_path,
                            const std::vector<std::string>& overrides) {
  LossWeights w;
  if (!config_path.empty()) apply_config_file(w, config_path);
  for (const std::string& kv : overrides) {
    const auto [key, value] = split_kv(kv);
    set_weight(w, key, value);
  }
  return w;
}

// ---------------------------------------------------------------------------
// convert: depth raster <-> point cloud text files.

CameraIntrinsics load_intrinsics(const std::string& calib_path) {
  return intrinsics_from_calib(parse_kitti_calib(read_file(calib_path)));
}

int run_convert(const std::string& input, const std::string& output,
                const std::string& calib_path, const std::string& to,
                int width, int height) {
  const CameraIntrinsics cam = load_intrinsics(calib_path);
  if (to == "cloud") {
    DepthRaster raster;
    try {
      raster = read_depth_raster(read_file(input));
    } catch (const std::runtime_error& e) {
      throw DataError(e.what());
    }
    const PointCloud cloud = unproject_depth(raster.view(), cam);
    std::ostringstream out;
    char buf[96];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", cloud.xs[i],
                    cloud.ys[i], cloud.zs[i]);
      out << buf;
    }
    write_file(output, out.str());
    return 0;
  }
  if (to == "raster") {
    if (width <= 0 || height <= 0) {
      throw UsageError("--width and --height are required for --to raster");
    }
    DepthRaster raster;
    raster.width = static_cast<std::uint32_t>(width);
    raster.height = static_cast<std::uint32_t>(height);
    raster.values.assign(static_cast<std::size_t>(width) * height, 0.0f);
    std::istringstream in(read_file(input));
    double x = 0, y = 0, z = 0;
    while (in >> x >> y >> z) {
      if (z <= 0.0) continue;  // behind the camera: not visible
      const int u = static_cast<int>(std::lround(cam.f_u * x / z + cam.c_u));
      const int v = static_cast<int>(std::lround(cam.f_v * y / z + cam.c_v));
      if (u < 0 || u >= width || v < 0 || v >= height) continue;
      float& slot = raster.values[static_cast<std::size_t>(v) * width + u];
      // Nearest surface wins when several points hit the same pixel.
      if (slot == 0.0f || z < slot) slot = static_cast<float>(z);
    }
    if (!in.eof()) throw DataError("malformed point cloud text in " + input);
    write_file(output, write_depth_raster(raster));
    return 0;
  }
  throw UsageError("--to must be 'cloud' or 'raster'");
}

// ---------------------------------------------------------------------------
// losses: evaluate every component and composition from a JSON input file.

std::vector<double> get_vector(const json& j, const std::string& key) {
  if (!j.contains(key)) throw DataError("losses input misses key " + key);
  return j.at(key).get<std::vector<double>>();
}

BevFeatureMap get_map(const json& j) {
  BevFeatureMap m(j.at("channels").get<int>(), j.at("rows").get<int>(),
                  j.at("cols").get<int>());
  const auto vals = j.at("values").get<std::vector<double>>();
  if (vals.size() != m.v.size()) throw DataError("feature map size mismatch");
  m.v = vals;
  return m;
}

std::vector<ResidualVector> get_residuals(const json& j) {
  std::vector<ResidualVector> out;
  for (const auto& row : j) {
    const auto vals = row.get<std::vector<double>>();
    if (vals.size() != 7) throw DataError("residual rows need 7 numbers");
    ResidualVector r;
    for (int i = 0; i < 7; ++i) r[i] = vals[i];
    out.push_back(r);
  }
  return out;
}

int run_losses(const std::string& input, const LossWeights& w) {
  json j;
  try {
    j = json::parse(read_file(input));
  } catch (const json::exception& e) {
    throw DataError(std::string("bad JSON: ") + e.what());
  }
  try {
    LossValueGrad feature, anchor, ocls, obox, det;
    if (j.contains("feature")) {
      const json& f = j.at("feature");
      BevMask mask(f.at("mask").at("rows").get<int>(),
                   f.at("mask").at("cols").get<int>());
      const auto mv = f.at("mask").at("values").get<std::vector<int>>();
      if (mv.size() != mask.v.size()) throw DataError("mask size mismatch");
      for (std::size_t i = 0; i < mv.size(); ++i) {
        mask.v[i] = static_cast<std::uint8_t>(mv[i] != 0);
      }
      feature = feature_da_loss(get_map(f.at("mono")), get_map(f.at("stereo")),
                                mask);
    }
    if (j.contains("anchor")) {
      const json& a = j.at("anchor");
      anchor = anchor_da_loss(
          get_vector(a, "mono_logits"), get_vector(a, "stereo_logits"),
          a.at("num_classes").get<int>(),
          a.at("fg").get<std::vector<std::size_t>>(),
          a.at("bg").get<std::vector<std::size_t>>(), w);
    }
    if (j.contains("object")) {
      const json& o = j.at("object");
      ocls = object_cls_loss(get_vector(o, "mono_scores"),
                             get_vector(o, "stereo_scores"));
      obox = object_box_loss(get_residuals(o.at("mono_res")),
                             get_residuals(o.at("stereo_res")));
    }
    LossValueGrad depth;
    if (j.contains("depth")) {
      const json& d = j.at("depth");
      depth = depth_focal_loss(get_vector(d, "logits"),
                               d.at("targets").get<std::vector<int>>(),
                               d.at("bins").get<int>(), w);
    }
    if (j.contains("detection")) {
      const json& t = j.at("detection");
      Assignment assign;
      assign.fg = t.at("fg").get<std::vector<std::size_t>>();
      assign.bg = t.at("bg").get<std::vector<std::size_t>>();
      for (const auto& tj : t.at("targets")) {
        AnchorTarget at;
        const auto res = tj.at("residual").get<std::vector<double>>();
        if (res.size() != 7) throw DataError("target residual needs 7 numbers");
        for (int i = 0; i < 7; ++i) at.residual[i] = res[i];
        at.direction = tj.at("direction").get<int>();
        at.class_id = tj.at("class_id").get<int>();
        assign.targets[tj.at("anchor").get<std::size_t>()] = at;
      }
      det = detection_task_loss(get_vector(t, "cls_logits"),
                                t.at("num_classes").get<int>(), assign,
                                get_vector(t, "res"), get_vector(t, "dir"),
                                depth, w);
    }
    const TotalLoss total = compose_total(feature, anchor, ocls, obox, det, w);
    char buf[64];
    auto line = [&](const char* name, double v) {
      std::snprintf(buf, sizeof(buf), "%s=%.10g\n", name, v);
      std::cout << buf;
    };
    line("L_feature", feature.value);
    line("L_anchor", anchor.value);
    line("L_object_cls", ocls.value);
    line("L_object_box", obox.value);
    line("L_depth", depth.value);
    line("L_det", det.value);
    line("L_mg_da", total.mg_da);
    line("L_iou_ma", total.iou_ma);
    line("L_sgm", total.sgm);
    line("L_total", total.total.value);
    return 0;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad losses input: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// gradcheck: finite-difference verification of every analytic gradient.

std::vector<double> randu(std::mt19937_64& rng, std::size_t n, double lo,
                          double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> out(n);
  for (double& v : out) v = d(rng);
  return out;
}

int run_gradcheck(int instances, bool verbose) {
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  std::string worst_name;
  auto record = [&](const std::string& name, double err) {
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
    if (verbose) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%-12s max_rel_err=%.3g\n", name.c_str(),
                    err);
      std::cout << buf;
    }
  };

  for (int it = 0; it < instances; ++it) {
    LossWeights w;
    // Masked feature distance.
    {
      BevFeatureMap fm(2, 3, 4), fs(2, 3, 4);
      BevMask mask(3, 4);
      for (double& v : fm.v) v = randu(rng, 1, -2, 2)[0];
      for (double& v : fs.v) v = randu(rng, 1, -2, 2)[0];
      for (auto& m : mask.v) m = rng() % 2;
      mask.v[0] = 1;
      const LossValueGrad r = feature_da_loss(fm, fs, mask);
      auto f = [&](const std::vector<double>& x) {
        BevFeatureMap m2 = fm;
        m2.v = x;
        return feature_da_loss(m2, fs, mask).value;
      };
      record("feature",
             check_gradient(f, fm.v, r.grads.at("F_M"), 1e-6).max_rel_err);
    }
    // Anchor-level KL.
    {
      const int k = 3, n = 8;
      std::vector<double> lm = randu(rng, n * k, -2, 2);
      std::vector<double> ls = randu(rng, n * k, -2, 2);
      std::vector<std::size_t> fg = {0, 3, 5}, bg = {1, 2, 6};
      const LossValueGrad r = anchor_da_loss(lm, ls, k - 1, fg, bg, w);
      auto f = [&](const std::vector<double>& x) {
        return anchor_da_loss(x, ls, k - 1, fg, bg, w).value;
      };
      record("anchor",
             check_gradient(f, lm, r.grads.at("logits_M"), 1e-6).max_rel_err);
    }
    // Object-level confidence and box alignment.
    {
      std::vector<double> sm = randu(rng, 5, -4, 4);
      std::vector<double> ss = randu(rng, 5, -4, 4);
      const LossValueGrad r = object_cls_loss(sm, ss);
      auto f = [&](const std::vector<double>& x) {
        return object_cls_loss(x, ss).value;
      };
      record("object_cls",
             check_gradient(f, sm, r.grads.at("scores_M"), 1e-6).max_rel_err);

      std::vector<ResidualVector> rm(3), rs(3);
      std::vector<double> flat = randu(rng, 21, -1, 1);
      for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 7; ++c) {
          rm[i][c] = flat[i * 7 + c];
          rs[i][c] = randu(rng, 1, -1, 1)[0];
        }
      const LossValueGrad rb = object_box_loss(rm, rs);
      auto fb = [&](const std::vector<double>& x) {
        std::vector<ResidualVector> r2(3);
        for (int i = 0; i < 3; ++i)
          for (int c = 0; c < 7; ++c) r2[i][c] = x[i * 7 + c];
        return object_box_loss(r2, rs).value;
      };
      record("object_box",
             check_gradient(fb, flat, rb.grads.at("res_M"), 1e-6).max_rel_err);
    }
    // Depth focal.
    {
      const int bins = 4, pixels = 6;
      std::vector<double> logits = randu(rng, pixels * bins, -2, 2);
      std::vector<int> targets(pixels);
      for (int p = 0; p < pixels; ++p) {
        targets[p] = (p % 3 == 0) ? -1 : static_cast<int>(rng() % bins);
      }
      const LossValueGrad r = depth_focal_loss(logits, targets, bins, w);
      auto f = [&](const std::vector<double>& x) {
        return depth_focal_loss(x, targets, bins, w).value;
      };
      record(
          "depth_focal",
          check_gradient(f, logits, r.grads.at("depth_logits"), 1e-6).max_rel_err);
    }
    // Detection task loss, all three heads.
    {
      Assignment assign;
      assign.fg = {0};
      assign.bg = {1, 2};
      AnchorTarget t;
      t.class_id = 1;
      t.direction = static_cast<int>(rng() % 2);
      for (int c = 0; c < 7; ++c) t.residual[c] = randu(rng, 1, -0.5, 0.5)[0];
      assign.targets[0] = t;
      std::vector<double> cls = randu(rng, 3 * 2, -1, 1);
      std::vector<double> res = randu(rng, 3 * 7, -0.4, 0.4);
      std::vector<double> dir = randu(rng, 3, -1, 1);
      const LossValueGrad depth;
      const LossValueGrad r =
          detection_task_loss(cls, 1, assign, res, dir, depth, w);
      auto fc = [&](const std::vector<double>& x) {
        return detection_task_loss(x, 1, assign, res, dir, depth, w).value;
      };
      record("det_cls",
             check_gradient(fc, cls, r.grads.at("cls_logits"), 1e-6).max_rel_err);
      auto fr = [&](const std::vector<double>& x) {
        return detection_task_loss(cls, 1, assign, x, dir, depth, w).value;
      };
      record("det_box",
             check_gradient(fr, res, r.grads.at("res_pred"), 1e-6).max_rel_err);
      auto fd = [&](const std::vector<double>& x) {
        return detection_task_loss(cls, 1, assign, res, x, depth, w).value;
      };
      record("det_dir",
             check_gradient(fd, dir, r.grads.at("dir_logits"), 1e-6).max_rel_err);
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "worst=%s max_rel_err=%.3g\n",
                worst_name.c_str(), worst);
  std::cout << buf;
  return worst < 1e-6 ? 0 : 4;
}

// ---------------------------------------------------------------------------
// train-demo: the six-group ablation matrix on synthetic scenes.

struct GroupSpec {
  const char* name;
  const char* description;
  bool sgm, feature, anchor, object;
};

constexpr GroupSpec kGroups[6] = {
    {"a", "baseline", false, false, false, false},
    {"b", "feature", true, true, false, false},
    {"c", "anchor", true, false, true, false},
    {"d", "object", true, false, false, true},
    {"e", "feature+anchor", true, true, true, false},
    {"f", "feature+anchor+object", true, true, true, true},
};

int run_train_demo(int scenes, int epochs, std::uint64_t seed,
                   const std::string& out_path, const LossWeights& w) {
  if (scenes < 5) throw UsageError("--scenes must be at least 5");
  if (epochs < 1) throw UsageError("--epochs must be positive");
  const TrainerContext ctx = make_trainer_context();
  const std::vector<SyntheticScene> all = generate_scenes(ctx, seed, scenes);
  const std::size_t n_train = static_cast<std::size_t>(scenes) * 4 / 5;
  const std::vector<SyntheticScene> train(all.begin(), all.begin() + n_train);
  const std::vector<SyntheticScene> held(all.begin() + n_train, all.end());

  double ap[6], fdist[6];
  auto run_group = [&](int g) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = epochs;
    cfg.weights = w;
    cfg.enable_sgm = kGroups[g].sgm;
    cfg.enable_feature = kGroups[g].feature;
    cfg.enable_anchor = kGroups[g].anchor;
    cfg.enable_object = kGroups[g].object;
    const TrainResult r = run_training(ctx, train, cfg);
    ap[g] = evaluate_bev_ap(ctx, held, r.mono);
    fdist[g] = mean_masked_feature_distance(ctx, held, r.stereo, r.mono);
  };

  // Groups are independent; parallelism never changes the numbers.
  const int workers = std::min(worker_cap(), 6);
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (int g = next++; g < 6; g = next++) run_group(g);
    });
  }
  for (std::thread& t : pool) t.join();

  std::ostringstream table;
  table << "group  components              ap_bev@0.5  feature_distance\n";
  char buf[128];
  for (int g = 0; g < 6; ++g) {
    std::snprintf(buf, sizeof(buf), "%-6s %-22s %10.4f  %16.6f\n",
                  kGroups[g].name, kGroups[g].description, ap[g], fdist[g]);
    table << buf;
  }
  if (out_path.empty()) {
    std::cout << table.str();
  } else {
    write_file(out_path, table.str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval: AP per difficulty from prediction + label folders.

int run_eval(const std::string& pred_dir, const std::string& label_dir,
             const std::string& criterion, double iou) {
  if (criterion != "bev" && criterion != "3d") {
    throw UsageError("--criterion must be 'bev' or '3d'");
  }
  if (!fs::is_directory(label_dir)) {
    throw DataError(label_dir + " is not a directory");
  }
  std::vector<std::string> frames;
  for (const auto& entry : fs::directory_iterator(label_dir)) {
    if (entry.path().extension() == ".txt") {
      frames.push_back(entry.path().stem().string());
    }
  }
  std::sort(frames.begin(), frames.end());
  if (frames.empty()) throw DataError("no .txt label files in " + label_dir);

  std::vector<PredictionRecord> preds;
  std::vector<std::pair<std::string, GroundTruthObject>> gts;
  for (const std::string& frame : frames) {
    try {
      const auto objs =
          parse_kitti_label(read_file(label_dir + "/" + frame + ".txt"));
      for (const auto& o : objs) gts.emplace_back(frame, o);
      const std::string pred_path = pred_dir + "/" + frame + ".txt";
      if (fs::exists(pred_path)) {
        const auto p = parse_predictions(read_file(pred_path), frame);
        preds.insert(preds.end(), p.begin(), p.end());
      }
    } catch (const std::runtime_error& e) {
      throw DataError(frame + ": " + e.what());
    }
  }

  EvalConfig cfg;
  cfg.iou_threshold = iou;
  cfg.criterion = criterion == "bev" ? ApCriterion::ApBev : ApCriterion::Ap3D;
  cfg.category = Category::Car;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "criterion=%s iou=%.2f category=Car\n",
                criterion.c_str(), iou);
  std::cout << buf;
  const std::pair<const char*, Difficulty> buckets[3] = {
      {"easy", Difficulty::Easy},
      {"moderate", Difficulty::Moderate},
      {"hard", Difficulty::Hard}};
  for (const auto& [name, bucket] : buckets) {
    std::snprintf(buf, sizeof(buf), "%-8s ap=%.6f\n", name,
                  compute_ap(preds, gts, cfg, bucket));
    std::cout << buf;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// heatmap: render a BEV response map of a synthetic scene to PGM.

int run_heatmap(std::uint64_t seed, int scene_index, const std::string& branch,
                const std::string& out_path) {
  if (scene_index < 0) throw UsageError("--scene must be non-negative");
  if (branch != "stereo" && branch != "mono") {
    throw UsageError("--branch must be 'stereo' or 'mono'");
  }
  const TrainerContext ctx = make_trainer_context();
  const auto scenes = generate_scenes(ctx, seed, scene_index + 1);
  const SyntheticScene& sc = scenes[scene_index];
  std::vector<Box3D> boxes;
  for (const ClassedBox& b : sc.gt_boxes) boxes.push_back(b.box);

  BevFeatureMap map;
  if (branch == "stereo") {
    map = pillarize(unproject_depth(sc.stereo_depth.view(), ctx.scfg.cam),
                    ctx.scfg.spec);
  } else {
    // Untrained mono view: lift the image features under a uniform depth
    // distribution.
    const SceneConfig& c = ctx.scfg;
    DepthDistribution dist(c.depth_bins, c.img_h, c.img_w, c.depth_near,
                           c.depth_far);
    for (double& p : dist.p) p = 1.0 / c.depth_bins;
    map = lift_frustum(sc.image_feats, ctx.c_img, dist, c.cam, c.spec);
  }
  write_file(out_path, encode_pgm(render_heatmap(map, boxes, ctx.scfg.spec)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stereo-guided monocular 3D detection toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> weight_overrides;

  // convert
  auto* convert = app.add_subcommand(
      "convert", "convert between depth rasters and point cloud text");
  std::string cv_input, cv_output, cv_calib, cv_to;
  int cv_width = 0, cv_height = 0;
  convert->add_option("--input", cv_input)->required();
  convert->add_option("--output", cv_output)->required();
  convert->add_option("--calib", cv_calib, "KITTI calibration file")->required();
  convert->add_option("--to", cv_to, "target format: cloud | raster")->required();
  convert->add_option("--width", cv_width, "raster width (cloud -> raster)");
  convert->add_option("--height", cv_height, "raster height (cloud -> raster)");

  // losses
  auto* losses = app.add_subcommand(
      "losses", "evaluate every loss component from a JSON input");
  std::string ls_input;
  losses->add_option("--input", ls_input)->required();
  losses->add_option("--config", config_path, "key=value weight config file");
  losses->add_option("--weights", weight_overrides,
                     "weight overrides, e.g. lambda_object=0.01");

  // gradcheck
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of every analytic gradient");
  int gc_instances = 20;
  bool gc_verbose = false;
  gradcheck->add_option("--instances", gc_instances, "instances per loss");
  gradcheck->add_flag("--verbose", gc_verbose, "print every result");

  // train-demo
  auto* demo = app.add_subcommand(
      "train-demo", "run the six-group guidance ablation on synthetic scenes");
  int td_scenes = 60, td_epochs = 50;
  std::uint64_t td_seed = 7;
  std::string td_out;
  demo->add_option("--scenes", td_scenes, "synthetic scene count");
  demo->add_option("--epochs", td_epochs, "mono training epochs");
  demo->add_option("--seed", td_seed, "scene/init RNG seed");
  demo->add_option("--out", td_out, "write the table here instead of stdout");
  demo->add_option("--config", config_path, "key=value weight config file");
  demo->add_option("--weights", weight_overrides, "weight overrides");

  // eval
  auto* eval = app.add_subcommand(
      "eval", "average precision per difficulty from prediction/label folders");
  std::string ev_pred, ev_label, ev_criterion = "bev";
  double ev_iou = 0.5;
  eval->add_option("--pred-dir", ev_pred)->required();
  eval->add_option("--label-dir", ev_label)->required();
  eval->add_option("--criterion", ev_criterion, "bev | 3d");
  eval->add_option("--iou", ev_iou, "IoU threshold");

  // heatmap
  auto* heatmap = app.add_subcommand(
      "heatmap", "render a BEV response heatmap of a synthetic scene as PGM");
  std::uint64_t hm_seed = 7;
  int hm_scene = 0;
  std::string hm_branch = "stereo", hm_out;
  heatmap->add_option("--seed", hm_seed);
  heatmap->add_option("--scene", hm_scene, "scene index");
  heatmap->add_option("--branch", hm_branch, "stereo | mono");
  heatmap->add_option("--out", hm_out)->required();

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return 2;
    }
    if (convert->parsed()) {
      return run_convert(cv_input, cv_output, cv_calib, cv_to, cv_width,
                         cv_height);
    }
    if (losses->parsed()) {
      return run_losses(ls_input, resolve_weights(config_path, weight_overrides));
    }
    if (gradcheck->parsed()) return run_gradcheck(gc_instances, gc_verbose);
    if (demo->parsed()) {
      return run_train_demo(td_scenes, td_epochs, td_seed, td_out,
                            resolve_weights(config_path, weight_overrides));
    }
    if (eval->parsed()) return run_eval(ev_pred, ev_label, ev_criterion, ev_iou);
    if (heatmap->parsed()) return run_heatmap(hm_seed, hm_scene, hm_branch, hm_out);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
