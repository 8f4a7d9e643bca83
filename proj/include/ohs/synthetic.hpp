// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic scenes with exact ground truth, and a "perfect detector"
// head rendered from ground truth. Both serve as oracles for the pipeline.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ohs/assignment.hpp"
#include "ohs/codec.hpp"
#include "ohs/error.hpp"
#include "ohs/geometry.hpp"
#include "ohs/voxelizer.hpp"

namespace ohs {

struct ClassTemplate {
  std::string name;
  double l, w, h;  // mean size
};

inline std::vector<ClassTemplate> kitti_templates() {
  return {{"Car", 3.9, 1.6, 1.56}, {"Pedestrian", 0.8, 0.6, 1.73}, {"Cyclist", 1.76, 0.6, 1.73}};
}

struct SynthSpec {
  std::size_t num_objects = 8;
  std::vector<double> class_mix{0.5, 0.25, 0.25};
  std::vector<ClassTemplate> templates = kitti_templates();
  /// Points per object drawn log-uniformly from [points_min, points_max].
  std::size_t points_min = 1;
  std::size_t points_max = 500;
  double surface_fraction = 0.7;
  double noise_sigma = 0.02;
  std::size_t clutter_points = 2000;
  double min_gap = 0.5;  // BEV clearance between boxes, meters
  double ground_z = -1.7;
  std::size_t max_retries = 1000;
  std::uint64_t seed = 0;
  GridConfig grid;

  void validate() const {
    if (class_mix.empty() || class_mix.size() != templates.size()) {
      throw ConfigError("synth: class_mix must have one weight per class template");
    }
    if (points_min > points_max) throw ConfigError("synth: points_min exceeds points_max");
    if (noise_sigma < 0.0 || min_gap < 0.0) throw ConfigError("synth: noise and gap must be nonnegative");
    if (surface_fraction < 0.0 || surface_fraction > 1.0) throw ConfigError("synth: surface_fraction in [0,1]");
    grid.validate();
  }
};

struct SceneBundle {
  std::string id;
  std::uint64_t seed = 0;
  std::vector<Point3> points;
  std::vector<GroundTruth> gts;
};

inline std::string scene_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return buf;
}

/// Builds one scene. Points are rounded to float32 so a round trip through
/// the point file format leaves every per-object point count unchanged.
inline SceneBundle synth_scene(const SynthSpec& spec, const std::string& id = "000000") {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::discrete_distribution<std::size_t> pick_class(spec.class_mix.begin(), spec.class_mix.end());

  SceneBundle scene;
  scene.id = id;
  scene.seed = spec.seed;

  const GridConfig& g = spec.grid;
  for (std::size_t k = 0; k < spec.num_objects; ++k) {
    const std::size_t cls = pick_class(rng);
    const ClassTemplate& t = spec.templates[cls];
    bool placed = false;
    for (std::size_t attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
      Box3D b;
      b.l = t.l * (0.9 + 0.2 * unit(rng));
      b.w = t.w * (0.9 + 0.2 * unit(rng));
      b.h = t.h * (0.9 + 0.2 * unit(rng));
      b.yaw = normalize_angle(-std::numbers::pi + 2.0 * std::numbers::pi * unit(rng));
      const double margin = 0.5 * std::hypot(b.l, b.w) + spec.min_gap;
      if (g.x.span() <= 2.0 * margin || g.y.span() <= 2.0 * margin) {
        throw Error("synth: grid range too small for object placement");
      }
      b.cx = g.x.min + margin + (g.x.span() - 2.0 * margin) * unit(rng);
      b.cy = g.y.min + margin + (g.y.span() - 2.0 * margin) * unit(rng);
      b.cz = spec.ground_z + 0.5 * b.h + 0.2 * (unit(rng) - 0.5);
      if (b.cz - 0.5 * b.h < g.z.min || b.cz + 0.5 * b.h > g.z.max) continue;

      Box3D grown = b;
      grown.l += spec.min_gap;
      grown.w += spec.min_gap;
      bool clear = true;
      for (const auto& other : scene.gts) {
        Box3D og = other.box;
        og.l += spec.min_gap;
        og.w += spec.min_gap;
        if (bev_intersection_area(grown, og) > 0.0) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      scene.gts.push_back({cls, b, 0, 0});
      placed = true;
    }
    if (!placed) throw Error("synth: could not place object " + std::to_string(k) + " after bounded retries");
  }

  const double log_lo = std::log(static_cast<double>(std::max<std::size_t>(spec.points_min, 1)));
  const double log_hi = std::log(static_cast<double>(std::max<std::size_t>(spec.points_max, 1)));
  for (auto& gt : scene.gts) {
    std::size_t n = spec.points_min;
    if (spec.points_max > spec.points_min) {
      n = static_cast<std::size_t>(std::floor(std::exp(log_lo + (log_hi - log_lo) * unit(rng))));
      n = std::clamp(n, spec.points_min, spec.points_max);
    }
    const Box3D& b = gt.box;
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double hl = 0.5 * b.l - 1e-3, hw = 0.5 * b.w - 1e-3, hh = 0.5 * b.h - 1e-3;
    const double a_side = b.w * b.h, a_long = b.l * b.h, a_top = b.l * b.w;
    const double a_total = 2.0 * a_side + 2.0 * a_long + a_top;
    for (std::size_t p = 0; p < n; ++p) {
      double lx = (2.0 * unit(rng) - 1.0) * hl;
      double ly = (2.0 * unit(rng) - 1.0) * hw;
      double lz = (2.0 * unit(rng) - 1.0) * hh;
      if (unit(rng) < spec.surface_fraction) {
        const double f = unit(rng) * a_total;
        if (f < a_side) lx = hl;
        else if (f < 2.0 * a_side) lx = -hl;
        else if (f < 2.0 * a_side + a_long) ly = hw;
        else if (f < 2.0 * a_side + 2.0 * a_long) ly = -hw;
        else lz = hh;
      }
      lx = std::clamp(lx + spec.noise_sigma * noise(rng), -hl, hl);
      ly = std::clamp(ly + spec.noise_sigma * noise(rng), -hw, hw);
      lz = std::clamp(lz + spec.noise_sigma * noise(rng), -hh, hh);
      Point3 pt{round_to_f32(b.cx + c * lx - s * ly), round_to_f32(b.cy + s * lx + c * ly),
                round_to_f32(b.cz + lz), round_to_f32(unit(rng))};
      scene.points.push_back(pt);
    }
  }

  for (std::size_t p = 0; p < spec.clutter_points;) {
    Point3 pt{round_to_f32(g.x.min + g.x.span() * unit(rng)),
              round_to_f32(g.y.min + g.y.span() * unit(rng)),
              round_to_f32(g.z.min + g.z.span() * unit(rng)), round_to_f32(unit(rng))};
    if (!(pt.x < g.x.max && pt.y < g.y.max && pt.z < g.z.max)) continue;
    bool inside = false;
    for (const auto& gt : scene.gts) inside = inside || point_in_box_3d(pt, gt.box);
    if (inside) continue;
    scene.points.push_back(pt);
    ++p;
  }

  for (auto& gt : scene.gts) {
    gt.num_points = static_cast<std::size_t>(
        std::count_if(scene.points.begin(), scene.points.end(),
                      [&](const Point3& p) { return point_in_box_3d(p, gt.box); }));
  }
  return scene;
}

/// Score the target head assigns to the hotspot of a given rank.
inline double oracle_score(std::size_t rank) { return 0.4 + 0.5 / (1.0 + static_cast<double>(rank)); }

/// Renders ground truth into a head tensor as a perfect detector would:
/// every hotspot fires for its object with exactly decodable regression
/// channels. An object with no hotspot fires from the cell containing its
/// center instead.
inline HeadOutput render_target_head(const AssignmentMap& map, std::span<const GroundTruth> gts,
                                     const HeadLayout& layout, const GridConfig& grid,
                                     LogitEncoding mode = LogitEncoding::Interpolated) {
  HeadOutput head(layout, map.rows, map.cols);
  const std::size_t roff = layout.relation_offset();
  const std::size_t rwidth = relation_width(layout.relation);
  auto fire = [&](std::size_t i, std::size_t j, const GroundTruth& gt, std::size_t rank) {
    auto cell = head.cell(i, j);
    const Vec2 center = cell_center(i, j, grid);
    cell[gt.class_id] = oracle_score(rank);
    write_targets(cell, layout, encode_box(gt.box, center), mode);
    const auto rel = spatial_relation_label(center, gt.box, layout.relation);
    for (std::size_t r = 0; r < rwidth; ++r) cell[roff + r] = rel.values[r];
  };
  for (const auto& h : map.hotspots) fire(h.cell.row, h.cell.col, gts[h.object], h.rank);
  const auto per_object = map.hotspots_per_object();
  for (std::size_t k = 0; k < gts.size(); ++k) {
    if (per_object[k] > 0) continue;
    if (auto c = cell_of(gts[k].box.center_bev(), grid)) {
      if (map.hotspot_index[map.index(c->first, c->second)] < 0) fire(c->first, c->second, gts[k], 0);
    }
  }
  return head;
}

}  // namespace ohs
