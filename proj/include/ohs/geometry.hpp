// SPDX-License-Identifier: Apache-2.0
//
// Oriented-box geometry in the bird's-eye-view (BEV) plane.
//
// Frame convention: x forward, y left, z up (LiDAR sensor frame). Yaw is
// measured counterclockwise from +x, and a box's length l runs along its
// heading. Camera-frame labels are converted on ingestion (see io.hpp).
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "ohs/error.hpp"

namespace ohs {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Rounds to the nearest float32 value. The volatile keeps the GCC 11 SLP
/// vectorizer from folding the double-float-double round trip away at -O3.
inline double round_to_f32(double v) {
  volatile float f = static_cast<float>(v);
  return f;
}

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

struct Box3D {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  double l = 1.0, w = 1.0, h = 1.0;
  double yaw = 0.0;

  double volume() const noexcept { return l * w * h; }
  double bev_area() const noexcept { return l * w; }
  Vec2 center_bev() const noexcept { return {cx, cy}; }

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

/// Counterclockwise vertex list.
using BevPolygon = std::vector<Vec2>;

/// Wraps an angle into [-pi, pi).
inline double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (a >= -std::numbers::pi && a < std::numbers::pi) return a;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r < 0.0) r += two_pi;
  r -= std::numbers::pi;
  return r >= std::numbers::pi ? r - two_pi : r;
}

inline bool is_valid(const Box3D& b) noexcept {
  return std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.cz) &&
         std::isfinite(b.yaw) && std::isfinite(b.l) && std::isfinite(b.w) &&
         std::isfinite(b.h) && b.l > 0.0 && b.w > 0.0 && b.h > 0.0;
}

inline void validate(const Box3D& b) {
  if (!is_valid(b)) throw DomainError("invalid box: sizes must be positive and all fields finite");
}

/// Maps a world BEV point into the box frame: x' along heading, y' to the left.
inline Vec2 local_frame(Vec2 p, const Box3D& box) noexcept {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double dx = p.x - box.cx;
  const double dy = p.y - box.cy;
  return {c * dx + s * dy, -s * dx + c * dy};
}

/// Four corners, counterclockwise, starting at front-left.
inline BevPolygon box_corners_bev(const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = 0.5 * box.l;
  const double hw = 0.5 * box.w;
  const std::array<Vec2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  BevPolygon out;
  out.reserve(4);
  for (const auto& q : local) {
    out.push_back({box.cx + c * q.x - s * q.y, box.cy + s * q.x + c * q.y});
  }
  return out;
}

/// Boundary counts as inside.
inline bool point_in_box_bev(Vec2 p, const Box3D& box) noexcept {
  const Vec2 q = local_frame(p, box);
  return std::abs(q.x) <= 0.5 * box.l && std::abs(q.y) <= 0.5 * box.w;
}

inline bool point_in_box_3d(const Point3& p, const Box3D& box) noexcept {
  return point_in_box_bev({p.x, p.y}, box) && std::abs(p.z - box.cz) <= 0.5 * box.h;
}

/// Signed shoelace area; positive for counterclockwise polygons.
inline double polygon_area(const BevPolygon& poly) noexcept {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    acc += a.x * b.y - a.y * b.x;
  }
  return 0.5 * acc;
}

/// Sutherland-Hodgman: clips `subject` against the convex counterclockwise `clip`.
inline BevPolygon clip_convex(const BevPolygon& subject, const BevPolygon& clip) {
  BevPolygon out = subject;
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !out.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % m];
    const double ex = b.x - a.x;
    const double ey = b.y - a.y;
    auto side = [&](const Vec2& p) { return ex * (p.y - a.y) - ey * (p.x - a.x); };

    BevPolygon in = std::move(out);
    out.clear();
    const std::size_t n = in.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2& cur = in[i];
      const Vec2& nxt = in[(i + 1) % n];
      const double sc = side(cur);
      const double sn = side(nxt);
      if (sc >= 0.0) out.push_back(cur);
      if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
        const double t = sc / (sc - sn);
        out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
      }
    }
  }
  return out;
}

/// Area of the BEV footprint intersection. Slivers below 1e-12 m^2 are zero.
inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const double ra = 0.5 * std::hypot(a.l, a.w);
  const double rb = 0.5 * std::hypot(b.l, b.w);
  if (std::hypot(a.cx - b.cx, a.cy - b.cy) > ra + rb) return 0.0;
  const double area = polygon_area(clip_convex(box_corners_bev(a), box_corners_bev(b)));
  return area < 1e-12 ? 0.0 : area;
}

inline double rotated_iou_bev(const Box3D& a, const Box3D& b) {
  if (a.cx == b.cx && a.cy == b.cy && a.l == b.l && a.w == b.w && a.yaw == b.yaw) return 1.0;
  const double inter = bev_intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  const double uni = a.bev_area() + b.bev_area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Volumetric IoU of two upright boxes: BEV intersection times vertical overlap.
inline double iou_3d(const Box3D& a, const Box3D& b) {
  const double top = std::min(a.cz + 0.5 * a.h, b.cz + 0.5 * b.h);
  const double bottom = std::max(a.cz - 0.5 * a.h, b.cz - 0.5 * b.h);
  const double h_overlap = top - bottom;
  if (h_overlap <= 0.0) return 0.0;
  if (a == b) return 1.0;
  const double inter = bev_intersection_area(a, b) * h_overlap;
  if (inter == 0.0) return 0.0;
  return std::clamp(inter / (a.volume() + b.volume() - inter), 0.0, 1.0);
}

/// Applies a rigid BEV motion (rotation by theta about the origin, then translation).
inline Box3D transform_box(const Box3D& b, double theta, Vec2 t) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Box3D out = b;
  out.cx = c * b.cx - s * b.cy + t.x;
  out.cy = s * b.cx + c * b.cy + t.y;
  out.yaw = normalize_angle(b.yaw + theta);
  return out;
}

inline Vec2 transform_point(Vec2 p, double theta, Vec2 t) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * p.x - s * p.y + t.x, s * p.x + c * p.y + t.y};
}

}  // namespace ohs
