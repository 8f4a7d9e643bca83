// SPDX-License-Identifier: Apache-2.0
//
// File formats.
//
//   points    KITTI velodyne layout: packed little-endian float32 (x, y, z, i).
//   labels    sensor frame, one object per line:
//               <class> cx cy cz l w h yaw [num_points [difficulty]]
//             or KITTI camera-frame label files, converted on read.
//   reports   JSON lines; the first line is a schema header
//               {"kind":..., "schema":"ohs.report", "version":1}
//   head      "OHSHEAD 1\n", one JSON header line, then row-major cell data
//             (channel fastest) as little-endian f32 or f64.
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ohs/assignment.hpp"
#include "ohs/codec.hpp"
#include "ohs/error.hpp"
#include "ohs/evaluator.hpp"
#include "ohs/geometry.hpp"
#include "ohs/inference.hpp"

namespace ohs {

using json = nlohmann::json;

namespace detail {

template <typename T>
T from_le(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

template <typename T>
void append_le(std::string& out, T v) {
  const T le = from_le(v);
  char buf[sizeof(T)];
  std::memcpy(buf, &le, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return from_le(v);
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string tok; ss >> tok;) out.push_back(tok);
  return out;
}

inline double parse_double(const std::string& tok, const std::string& source, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(source, line, "not a number: '" + tok + "'");
  }
}

}  // namespace detail

// ---------------------------------------------------------------- points

inline std::vector<Point3> decode_point_bin(const std::string& bytes, const std::string& source = "<memory>") {
  constexpr std::size_t kRecord = 16;
  if (bytes.size() % kRecord != 0) {
    throw ParseError(source, bytes.size() - bytes.size() % kRecord,
                     "truncated point record (file length not a multiple of 16 bytes)");
  }
  std::vector<Point3> pts;
  pts.reserve(bytes.size() / kRecord);
  for (std::size_t off = 0; off < bytes.size(); off += kRecord) {
    const char* p = bytes.data() + off;
    pts.push_back({detail::load_le<float>(p), detail::load_le<float>(p + 4), detail::load_le<float>(p + 8),
                   detail::load_le<float>(p + 12)});
  }
  return pts;
}

inline std::string encode_point_bin(std::span<const Point3> pts) {
  std::string out;
  out.reserve(pts.size() * 16);
  for (const auto& p : pts) {
    detail::append_le(out, static_cast<float>(p.x));
    detail::append_le(out, static_cast<float>(p.y));
    detail::append_le(out, static_cast<float>(p.z));
    detail::append_le(out, static_cast<float>(p.intensity));
  }
  return out;
}

inline std::vector<Point3> read_point_bin(const std::filesystem::path& path) {
  return decode_point_bin(detail::read_file(path), path.string());
}

inline void write_point_bin(const std::filesystem::path& path, std::span<const Point3> pts) {
  detail::write_file(path, encode_point_bin(pts));
}

// ---------------------------------------------------------------- labels

enum class LabelFrame { Sensor, KittiCamera };

/// Rectified-camera to LiDAR transform from a KITTI calibration file.
struct KittiCalib {
  std::array<double, 9> r0_rect{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 12> tr_velo_to_cam{0, -1, 0, 0, 0, 0, -1, 0, 1, 0, 0, 0};

  /// Maps a point from the rectified camera frame into the sensor frame.
  std::array<double, 3> cam_to_velo(std::array<double, 3> p) const {
    // R0 is orthonormal: inverse is the transpose.
    std::array<double, 3> q{};
    for (int i = 0; i < 3; ++i) {
      q[i] = r0_rect[0 * 3 + i] * p[0] + r0_rect[1 * 3 + i] * p[1] + r0_rect[2 * 3 + i] * p[2];
    }
    // Tr = [R | t]; inverse is [R^T | -R^T t].
    const auto& t = tr_velo_to_cam;
    std::array<double, 3> d{q[0] - t[3], q[1] - t[7], q[2] - t[11]};
    std::array<double, 3> v{};
    for (int i = 0; i < 3; ++i) v[i] = t[0 * 4 + i] * d[0] + t[1 * 4 + i] * d[1] + t[2 * 4 + i] * d[2];
    return v;
  }
};

inline KittiCalib read_kitti_calib(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  std::istringstream in(text);
  KittiCalib calib;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    const std::string key = toks[0];
    auto fill = [&](auto& arr) {
      if (toks.size() != arr.size() + 1) throw ParseError(path.string(), line_no, "wrong value count for " + key);
      for (std::size_t i = 0; i < arr.size(); ++i) arr[i] = detail::parse_double(toks[i + 1], path.string(), line_no);
    };
    if (key == "R0_rect:" || key == "R_rect:") fill(calib.r0_rect);
    else if (key == "Tr_velo_to_cam:" || key == "Tr_velo_cam:") fill(calib.tr_velo_to_cam);
  }
  return calib;
}

/// KITTI difficulty tier from 2D box height, occlusion and truncation.
inline int kitti_difficulty(double bbox_height, int occlusion, double truncation) {
  if (bbox_height >= 40.0 && occlusion <= 0 && truncation <= 0.15) return 0;
  if (bbox_height >= 25.0 && occlusion <= 1 && truncation <= 0.30) return 1;
  if (bbox_height >= 25.0 && occlusion <= 2 && truncation <= 0.50) return 2;
  return 3;
}

/// Converts one KITTI camera-frame object into the sensor frame.
/// Location is the bottom center; yaw = -rotation_y - pi/2.
inline Box3D kitti_camera_to_sensor(double h, double w, double l, std::array<double, 3> loc, double ry,
                                    const KittiCalib& calib) {
  const auto bottom = calib.cam_to_velo(loc);
  Box3D b;
  b.cx = bottom[0];
  b.cy = bottom[1];
  b.cz = bottom[2] + 0.5 * h;
  b.l = l;
  b.w = w;
  b.h = h;
  b.yaw = normalize_angle(-ry - 0.5 * std::numbers::pi);
  return b;
}

inline std::optional<std::size_t> class_index(const std::vector<std::string>& names, const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

/// Parses label text. Lines whose class is not in `class_names` (e.g. DontCare) are skipped.
inline std::vector<GroundTruth> parse_labels(const std::string& text, LabelFrame frame,
                                             const std::vector<std::string>& class_names,
                                             const std::optional<KittiCalib>& calib = std::nullopt,
                                             const std::string& source = "<memory>") {
  std::vector<GroundTruth> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  const KittiCalib cal = calib.value_or(KittiCalib{});
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    auto num = [&](std::size_t i) { return detail::parse_double(toks[i], source, line_no); };
    auto count = [&](std::size_t i) -> std::size_t {
      const double v = num(i);
      if (v < 0.0 || v != std::floor(v)) throw ParseError(source, line_no, "expected a nonnegative integer");
      return static_cast<std::size_t>(v);
    };

    auto cls = class_index(class_names, toks[0]);
    if (!cls) continue;
    GroundTruth gt;
    gt.class_id = *cls;
    if (frame == LabelFrame::Sensor) {
      if (toks.size() < 8 || toks.size() > 10) {
        throw ParseError(source, line_no, "expected 8 to 10 fields: class cx cy cz l w h yaw [num_points [difficulty]]");
      }
      gt.box = {num(1), num(2), num(3), num(4), num(5), num(6), num(7)};
      if (toks.size() >= 9) gt.num_points = count(8);
      if (toks.size() == 10) gt.difficulty = static_cast<int>(count(9));
    } else {
      if (toks.size() != 15 && toks.size() != 16) {
        throw ParseError(source, line_no, "expected 15 or 16 fields in a KITTI label line");
      }
      const double trunc = num(1);
      const int occ = static_cast<int>(num(2));
      const double bbox_h = num(7) - num(5);
      gt.box = kitti_camera_to_sensor(num(8), num(9), num(10), {num(11), num(12), num(13)}, num(14), cal);
      gt.difficulty = kitti_difficulty(bbox_h, occ, trunc);
    }
    if (!is_valid(gt.box)) throw ParseError(source, line_no, "invalid box (non-positive size or non-finite value)");
    out.push_back(gt);
  }
  return out;
}

inline std::vector<GroundTruth> read_labels(const std::filesystem::path& path, LabelFrame frame,
                                            const std::vector<std::string>& class_names,
                                            const std::optional<KittiCalib>& calib = std::nullopt) {
  return parse_labels(detail::read_file(path), frame, class_names, calib, path.string());
}

inline std::string format_labels(std::span<const GroundTruth> gts, const std::vector<std::string>& class_names) {
  std::string out;
  for (const auto& g : gts) {
    if (g.class_id >= class_names.size()) throw DomainError("class id has no name");
    const auto& b = g.box;
    out += class_names[g.class_id];
    for (double v : {b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw}) out += " " + detail::format_double(v);
    out += " " + std::to_string(g.num_points) + " " + std::to_string(g.difficulty) + "\n";
  }
  return out;
}

inline void write_labels(const std::filesystem::path& path, std::span<const GroundTruth> gts,
                         const std::vector<std::string>& class_names) {
  detail::write_file(path, format_labels(gts, class_names));
}

// ---------------------------------------------------------------- reports

inline constexpr int kReportVersion = 1;
inline constexpr const char* kReportSchema = "ohs.report";

struct Report {
  std::string kind;
  std::vector<json> records;

  friend bool operator==(const Report&, const Report&) = default;
};

inline std::string format_report(const Report& r) {
  std::string out = json{{"schema", kReportSchema}, {"version", kReportVersion}, {"kind", r.kind}}.dump();
  out += '\n';
  for (const auto& rec : r.records) {
    out += rec.dump();
    out += '\n';
  }
  return out;
}

inline Report parse_report(const std::string& text, const std::string& expected_kind = {},
                           const std::string& source = "<memory>") {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  Report r;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!have_header) {
      if (!j.is_object() || j.value("schema", "") != kReportSchema || !j.contains("version") ||
          !j.contains("kind")) {
        throw ParseError(source, line_no, "missing report schema header");
      }
      if (j["version"] != kReportVersion) {
        throw ParseError(source, line_no, "schema version mismatch: expected " + std::to_string(kReportVersion));
      }
      r.kind = j["kind"].get<std::string>();
      if (!expected_kind.empty() && r.kind != expected_kind) {
        throw ParseError(source, line_no, "report kind '" + r.kind + "' where '" + expected_kind + "' was expected");
      }
      have_header = true;
      continue;
    }
    r.records.push_back(std::move(j));
  }
  if (!have_header) throw ParseError(source, line_no, "empty report (no schema header)");
  return r;
}

inline void write_report(const std::filesystem::path& path, const Report& r) {
  detail::write_file(path, format_report(r));
}

inline Report read_report(const std::filesystem::path& path, const std::string& expected_kind = {}) {
  return parse_report(detail::read_file(path), expected_kind, path.string());
}

inline json box_to_json(const Box3D& b) {
  return json::array({b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw});
}

inline Box3D box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 7) throw Error("box record must be an array of 7 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>(),
          j[4].get<double>(), j[5].get<double>(), j[6].get<double>()};
}

inline json detection_to_json(const Detection& d, const std::string& scene) {
  return json{{"scene", scene}, {"class", d.class_id}, {"score", d.score},
              {"box", box_to_json(d.box)}, {"row", d.row}, {"col", d.col}};
}

inline Detection detection_from_json(const json& j) {
  Detection d;
  d.class_id = j.at("class").get<std::size_t>();
  d.score = j.at("score").get<double>();
  d.box = box_from_json(j.at("box"));
  d.row = j.value("row", std::size_t{0});
  d.col = j.value("col", std::size_t{0});
  return d;
}

inline json hotspot_to_json(const Hotspot& h) {
  json rel = json::array();
  for (double v : h.relation.label()) rel.push_back(v);
  return json{{"row", h.cell.row}, {"col", h.cell.col}, {"object", h.object}, {"class", h.class_id},
              {"rank", h.rank}, {"targets", h.targets.v}, {"relation", rel}};
}

/// FNV-1a over a record's canonical serialization.
inline std::uint64_t record_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------- head tensors

enum class HeadDtype { F32, F64 };

inline json specs_to_json(const RegressionSpecs& specs) {
  json j = json::object();
  for (std::size_t t = 0; t < kNumTargets; ++t) {
    const auto& s = specs.bins[t];
    j[kTargetNames[t]] = s ? json{{"a", s->a}, {"b", s->b}, {"n", s->n}} : json(nullptr);
  }
  return j;
}

inline RegressionSpecs specs_from_json(const json& j) {
  RegressionSpecs specs;
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto pos = std::find(kTargetNames.begin(), kTargetNames.end(), it.key());
    if (pos == kTargetNames.end()) throw ConfigError("unknown regression channel '" + it.key() + "'");
    const auto idx = static_cast<std::size_t>(pos - kTargetNames.begin());
    if (it.value().is_null()) {
      specs.bins[idx].reset();
      continue;
    }
    for (auto kv = it.value().begin(); kv != it.value().end(); ++kv) {
      if (kv.key() != "a" && kv.key() != "b" && kv.key() != "n") {
        throw ConfigError("unknown key '" + kv.key() + "' in soft-argmin spec for " + it.key());
      }
    }
    specs.bins[idx] = SoftArgminSpec{it.value().at("a").get<double>(), it.value().at("b").get<double>(),
                                     it.value().at("n").get<std::size_t>()};
  }
  specs.validate();
  return specs;
}

inline std::string encode_head(const HeadOutput& head, const std::vector<std::string>& class_names = {},
                               HeadDtype dtype = HeadDtype::F64) {
  json hdr{{"rows", head.rows},
           {"cols", head.cols},
           {"dtype", dtype == HeadDtype::F32 ? "f32" : "f64"},
           {"num_classes", head.layout.num_classes},
           {"class_names", class_names},
           {"relation", to_string(head.layout.relation)},
           {"specs", specs_to_json(head.layout.specs)},
           {"channels", head.layout.channel_names(class_names)}};
  std::string out = "OHSHEAD 1\n" + hdr.dump() + "\n";
  out.reserve(out.size() + head.data.size() * (dtype == HeadDtype::F32 ? 4 : 8));
  for (double v : head.data) {
    if (dtype == HeadDtype::F32) detail::append_le(out, static_cast<float>(v));
    else detail::append_le(out, v);
  }
  return out;
}

struct HeadFile {
  HeadOutput head;
  std::vector<std::string> class_names;
};

inline HeadFile decode_head(const std::string& bytes, const std::string& source = "<memory>") {
  static const std::string magic = "OHSHEAD 1\n";
  if (bytes.compare(0, magic.size(), magic) != 0) throw ParseError(source, 0, "missing OHSHEAD 1 magic");
  const std::size_t nl = bytes.find('\n', magic.size());
  if (nl == std::string::npos) throw ParseError(source, magic.size(), "unterminated header");
  json hdr;
  try {
    hdr = json::parse(bytes.substr(magic.size(), nl - magic.size()));
  } catch (const json::parse_error& e) {
    throw ParseError(source, magic.size(), std::string("invalid header JSON: ") + e.what());
  }
  HeadFile f;
  HeadLayout layout;
  std::vector<std::string> channels;
  std::string dtype;
  std::size_t rows = 0, cols = 0;
  try {
    layout.num_classes = hdr.at("num_classes").get<std::size_t>();
    layout.specs = specs_from_json(hdr.at("specs"));
    layout.relation = relation_encoding_from_string(hdr.at("relation").get<std::string>());
    f.class_names = hdr.at("class_names").get<std::vector<std::string>>();
    channels = hdr.at("channels").get<std::vector<std::string>>();
    dtype = hdr.at("dtype").get<std::string>();
    rows = hdr.at("rows").get<std::size_t>();
    cols = hdr.at("cols").get<std::size_t>();
    layout.validate();
  } catch (const json::exception& e) {
    throw ParseError(source, magic.size(), std::string("bad header: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(source, magic.size(), std::string("bad header: ") + e.what());
  }
  if (channels != layout.channel_names(f.class_names)) {
    throw ParseError(source, magic.size(), "channel list does not match the declared layout");
  }
  if (dtype != "f32" && dtype != "f64") throw ParseError(source, magic.size(), "unsupported dtype " + dtype);
  const std::size_t width = dtype == "f32" ? 4 : 8;
  const std::size_t body = nl + 1;
  const std::size_t values = rows * cols * layout.channels();
  const std::size_t expected = values * width;
  if (rows != 0 && cols != 0 && (values / rows / cols != layout.channels() || expected / width != values)) {
    throw ParseError(source, magic.size(), "declared dimensions overflow");
  }
  if (bytes.size() - body != expected) {
    throw ParseError(source, bytes.size(), "payload is " + std::to_string(bytes.size() - body) + " bytes, expected " +
                                               std::to_string(expected));
  }
  f.head = HeadOutput(layout, rows, cols);
  const char* p = bytes.data() + body;
  for (std::size_t i = 0; i < f.head.data.size(); ++i, p += width) {
    f.head.data[i] = width == 4 ? static_cast<double>(detail::load_le<float>(p)) : detail::load_le<double>(p);
  }
  return f;
}

inline void write_head(const std::filesystem::path& path, const HeadOutput& head,
                       const std::vector<std::string>& class_names = {}, HeadDtype dtype = HeadDtype::F64) {
  detail::write_file(path, encode_head(head, class_names, dtype));
}

inline HeadFile read_head(const std::filesystem::path& path) {
  return decode_head(detail::read_file(path), path.string());
}

}  // namespace ohs
