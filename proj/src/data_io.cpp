#include "sgm3d/data_io.hpp"

#include <cstdio>
#include <cmath>
#include <cstring>
#include <sstream>

namespace sgm3d {

std::string category_name(Category c) {
  switch (c) {
    case Category::Car: return "Car";
    case Category::Pedestrian: return "Pedestrian";
    case Category::Cyclist: return "Cyclist";
    case Category::DontCare: return "DontCare";
    case Category::Other: return "Other";
  }
  return "Other";
}

Category category_from_name(const std::string& name) {
  if (name == "Car") return Category::Car;
  if (name == "Pedestrian") return Category::Pedestrian;
  if (name == "Cyclist") return Category::Cyclist;
  if (name == "DontCare") return Category::DontCare;
  return Category::Other;
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

double parse_num(const std::string& tok, int line_no) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw MalformedLine(line_no);
  }
  if (pos != tok.size()) throw MalformedLine(line_no);
  return v;
}

GroundTruthObject object_from_fields(const std::vector<std::string>& f,
                                     int line_no) {
  GroundTruthObject o;
  o.raw_category = f[0];
  o.category = category_from_name(f[0]);
  o.dont_care = o.category == Category::DontCare;
  o.truncation = parse_num(f[1], line_no);
  o.occlusion = static_cast<int>(parse_num(f[2], line_no));
  o.alpha = parse_num(f[3], line_no);
  for (int i = 0; i < 4; ++i) o.bbox2d[i] = parse_num(f[4 + i], line_no);
  for (int i = 0; i < 3; ++i) o.dims[i] = parse_num(f[8 + i], line_no);
  for (int i = 0; i < 3; ++i) o.location[i] = parse_num(f[11 + i], line_no);
  o.yaw = parse_num(f[14], line_no);
  return o;
}

}  // namespace

std::vector<GroundTruthObject> parse_kitti_label(const std::string& text) {
  std::vector<GroundTruthObject> out;
  std::istringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() < 15) throw MalformedLine(line_no);
    out.push_back(object_from_fields(fields, line_no));
  }
  return out;
}

CalibrationSet parse_kitti_calib(const std::string& text) {
  CalibrationSet calib;
  bool have_p2 = false, have_p3 = false;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    const bool is_p2 = fields[0] == "P2:";
    const bool is_p3 = fields[0] == "P3:";
    if (!is_p2 && !is_p3) continue;
    if (fields.size() != 13) throw MalformedMatrix();
    auto& dst = is_p2 ? calib.p_left : calib.p_right;
    for (int i = 0; i < 12; ++i) {
      try {
        dst[i] = std::stod(fields[1 + i]);
      } catch (const std::exception&) {
        throw MalformedMatrix();
      }
    }
    (is_p2 ? have_p2 : have_p3) = true;
  }
  if (!have_p2) throw MissingKey("P2");
  if (!have_p3) throw MissingKey("P3");
  return calib;
}

DepthRaster read_depth_raster(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "SGMD", 4) != 0) {
    throw BadMagic();
  }
  if (bytes.size() < 12) throw TruncatedPayload();
  auto read_u32 = [&](std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + off, 4);
    return v;
  };
  DepthRaster r;
  r.width = read_u32(4);
  r.height = read_u32(8);
  const std::size_t n = static_cast<std::size_t>(r.width) * r.height;
  if (bytes.size() < 12 + n * 4) throw TruncatedPayload();
  r.values.resize(n);
  std::memcpy(r.values.data(), bytes.data() + 12, n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(r.values[i]) || r.values[i] < 0.0f) throw InvalidDepth(i);
  }
  return r;
}

std::string write_depth_raster(const DepthRaster& r) {
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    if (!std::isfinite(r.values[i]) || r.values[i] < 0.0f) {
      throw InvalidDepth(i);
    }
  }
  std::string out;
  out.reserve(12 + r.values.size() * 4);
  out.append("SGMD", 4);
  auto push_u32 = [&](std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
  };
  push_u32(r.width);
  push_u32(r.height);
  out.append(reinterpret_cast<const char*>(r.values.data()),
             r.values.size() * 4);
  return out;
}

std::string serialize_predictions(const std::vector<PredictionRecord>& preds) {
  std::string out;
  char buf[512];
  for (const auto& p : preds) {
    GroundTruthObject o;
    box_to_camera_object(p.box, o);
    std::snprintf(buf, sizeof(buf),
                  "%s %.2f %d %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f "
                  "%.2f %.2f %.2f %.2f\n",
                  category_name(p.category).c_str(), 0.0, 0, -10.0, -1.0, -1.0,
                  -1.0, -1.0, o.dims[0], o.dims[1], o.dims[2], o.location[0],
                  o.location[1], o.location[2], o.yaw, p.score);
    out += buf;
  }
  return out;
}

std::vector<PredictionRecord> parse_predictions(const std::string& text,
                                                const std::string& frame_id) {
  std::vector<PredictionRecord> out;
  std::istringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() < 16) throw MalformedLine(line_no);
    const GroundTruthObject o = object_from_fields(fields, line_no);
    PredictionRecord p;
    p.category = o.category;
    p.box = box_from_camera_object(o);
    p.score = parse_num(fields[15], line_no);
    p.frame_id = frame_id;
    out.push_back(p);
  }
  return out;
}

CameraIntrinsics intrinsics_from_calib(const CalibrationSet& calib) {
  CameraIntrinsics cam;
  cam.f_u = calib.p_left[0];
  cam.f_v = calib.p_left[5];
  cam.c_u = calib.p_left[2];
  cam.c_v = calib.p_left[6];
  if (cam.f_u != 0.0) {
    cam.baseline = -(calib.p_right[3] - calib.p_left[3]) / cam.f_u;
  }
  return cam;
}

Box3D box_from_camera_object(const GroundTruthObject& obj) {
  Box3D b;
  b.h = obj.dims[0];
  b.w = obj.dims[1];
  b.l = obj.dims[2];
  // KITTI location is the bottom-center of the box.
  b.x = obj.location[2];
  b.y = -obj.location[0];
  b.z = -obj.location[1] + 0.5 * b.h;
  b.yaw = normalize_angle(-obj.yaw);
  return b;
}

void box_to_camera_object(const Box3D& b, GroundTruthObject& obj) {
  obj.dims[0] = b.h;
  obj.dims[1] = b.w;
  obj.dims[2] = b.l;
  obj.location[0] = -b.y;
  obj.location[1] = -(b.z - 0.5 * b.h);
  obj.location[2] = b.x;
  obj.yaw = normalize_angle(-b.yaw);
}

}  // namespace sgm3d
