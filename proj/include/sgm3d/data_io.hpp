#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgm3d/boxes.hpp"
#include "sgm3d/geometry.hpp"

namespace sgm3d {

enum class Category { Car, Pedestrian, Cyclist, DontCare, Other };

std::string category_name(Category c);
Category category_from_name(const std::string& name);

struct CalibrationSet {
  std::array<double, 12> p_left{};   // P2, row-major 3x4
  std::array<double, 12> p_right{};  // P3
  std::string frame_id;
};

/// One KITTI label line. `location` is the KITTI camera-frame bottom-center
/// of the box; `dims` are (h, w, l); `yaw` is rotation_y.
struct GroundTruthObject {
  Category category = Category::Other;
  std::string raw_category;
  double truncation = 0.0;
  int occlusion = 0;
  double alpha = 0.0;
  double bbox2d[4] = {0, 0, 0, 0};  // left, top, right, bottom
  double dims[3] = {0, 0, 0};       // h, w, l
  double location[3] = {0, 0, 0};   // x, y, z camera frame
  double yaw = 0.0;
  bool dont_care = false;
};

struct DepthRaster {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> values;  // row-major, meters, 0 = invalid

  DepthRasterView view() const { return {static_cast<int>(width),
                                         static_cast<int>(height),
                                         values.data()}; }
};

struct PredictionRecord {
  Box3D box;  // BEV frame
  double score = 0.0;
  Category category = Category::Car;
  std::string frame_id;
};

struct MalformedLine : std::runtime_error {
  int line_no;
  explicit MalformedLine(int line)
      : std::runtime_error("malformed label line " + std::to_string(line)),
        line_no(line) {}
};

struct MissingKey : std::runtime_error {
  std::string key;
  explicit MissingKey(std::string k)
      : std::runtime_error("missing calibration key " + k), key(std::move(k)) {}
};

struct MalformedMatrix : std::runtime_error {
  MalformedMatrix() : std::runtime_error("calibration matrix needs 12 numbers") {}
};

struct BadMagic : std::runtime_error {
  BadMagic() : std::runtime_error("depth raster magic is not SGMD") {}
};

struct TruncatedPayload : std::runtime_error {
  TruncatedPayload() : std::runtime_error("depth raster payload truncated") {}
};

struct InvalidDepth : std::runtime_error {
  std::size_t index;
  explicit InvalidDepth(std::size_t i)
      : std::runtime_error("invalid depth value at index " + std::to_string(i)),
        index(i) {}
};

std::vector<GroundTruthObject> parse_kitti_label(const std::string& text);
CalibrationSet parse_kitti_calib(const std::string& text);

/// "SGMD" + width,height (LE u32) + width*height LE float32.
DepthRaster read_depth_raster(const std::string& bytes);
std::string write_depth_raster(const DepthRaster& r);

/// KITTI result lines: 15 label fields plus the score as the 16th.
std::string serialize_predictions(const std::vector<PredictionRecord>& preds);
std::vector<PredictionRecord> parse_predictions(const std::string& text,
                                                const std::string& frame_id = "");

CameraIntrinsics intrinsics_from_calib(const CalibrationSet& calib);

/// KITTI camera-frame object -> BEV-frame box (center at mid height).
Box3D box_from_camera_object(const GroundTruthObject& obj);
/// Inverse: fills dims/location/yaw of a camera-frame object.
void box_to_camera_object(const Box3D& b, GroundTruthObject& obj);

}  // namespace sgm3d
