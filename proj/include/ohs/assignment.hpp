// SPDX-License-Identifier: Apache-2.0
//
// Hotspot target assignment.
//
// A spot is an occupied output cell whose center lies inside a ground-truth
// box. Each object keeps at most M = max(1, floor(C / volume)) of its spots,
// those nearest to the box center, as hotspots. The remaining cells inside any
// box are ignored by the classification loss; everything else is negative.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

#include "ohs/codec.hpp"
#include "ohs/error.hpp"
#include "ohs/geometry.hpp"
#include "ohs/voxelizer.hpp"

namespace ohs {

struct GroundTruth {
  std::size_t class_id = 0;
  Box3D box;
  std::size_t num_points = 0;
  /// 0 easy, 1 moderate, 2 hard, 3 excluded. Synthetic data is always 0.
  int difficulty = 0;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

enum class CellState : std::uint8_t { Negative = 0, Ignored = 1, Hotspot = 2 };

/// One-hot label (categorical kinds) or the normalized (x', y') offset (deviation).
struct SpatialRelationTarget {
  RelationEncoding kind = RelationEncoding::None;
  std::array<double, 8> values{};
  std::size_t size = 0;

  std::span<const double> label() const { return {values.data(), size}; }
  /// Index of the active class for categorical kinds.
  std::optional<std::size_t> active() const {
    if (!is_categorical(kind)) return std::nullopt;
    for (std::size_t i = 0; i < size; ++i) {
      if (values[i] == 1.0) return i;
    }
    return std::nullopt;
  }
  friend bool operator==(const SpatialRelationTarget&, const SpatialRelationTarget&) = default;
};

/// Quadrants are numbered 0..3 counterclockwise from front-left; ties on an
/// axis go to the non-negative side.
inline SpatialRelationTarget spatial_relation_label(Vec2 center, const Box3D& box, RelationEncoding kind) {
  SpatialRelationTarget out;
  out.kind = kind;
  out.size = relation_width(kind);
  const Vec2 q = local_frame(center, box);
  auto hot = [&](std::size_t i) { out.values[i] = 1.0; };
  switch (kind) {
    case RelationEncoding::None:
      break;
    case RelationEncoding::LeftRight:
      hot(q.y >= 0.0 ? 0 : 1);
      break;
    case RelationEncoding::FrontBack:
      hot(q.x >= 0.0 ? 0 : 1);
      break;
    case RelationEncoding::Quadrant:
      if (q.x >= 0.0 && q.y >= 0.0) hot(0);
      else if (q.x < 0.0 && q.y >= 0.0) hot(1);
      else if (q.x < 0.0) hot(2);
      else hot(3);
      break;
    case RelationEncoding::EightDir: {
      double angle = std::atan2(q.y, q.x);
      if (angle < 0.0) angle += 2.0 * std::numbers::pi;
      const auto sector = static_cast<std::size_t>(std::floor(angle / (std::numbers::pi / 4.0)));
      hot(std::min<std::size_t>(sector, 7));
      break;
    }
    case RelationEncoding::Deviation:
      out.values[0] = std::clamp(q.x / box.l, -0.5, 0.5);
      out.values[1] = std::clamp(q.y / box.w, -0.5, 0.5);
      break;
  }
  return out;
}

/// M = max(1, floor(C / volume)); an infinite C keeps every spot.
inline std::size_t max_hotspots(const GroundTruth& gt, double C) {
  if (!(C > 0.0)) throw ConfigError("C must be positive");
  if (std::isinf(C)) return std::numeric_limits<std::size_t>::max();
  const double m = std::floor(C / gt.box.volume());
  if (m >= static_cast<double>(std::numeric_limits<std::size_t>::max())) {
    return std::numeric_limits<std::size_t>::max();
  }
  return std::max<std::size_t>(1, static_cast<std::size_t>(m));
}

namespace detail {

inline double center_dist2(Vec2 c, const Box3D& box) {
  const double dx = c.x - box.cx;
  const double dy = c.y - box.cy;
  return dx * dx + dy * dy;
}

/// Output cells whose centers could lie inside the box (conservative by one cell).
struct CellWindow {
  std::size_t row_lo = 0, row_hi = 0, col_lo = 0, col_hi = 0;  // inclusive
  bool empty = true;
};

inline CellWindow window_for(const Box3D& box, const GridConfig& cfg) {
  const auto corners = box_corners_bev(box);
  double xmin = corners[0].x, xmax = xmin, ymin = corners[0].y, ymax = ymin;
  for (const auto& c : corners) {
    xmin = std::min(xmin, c.x);
    xmax = std::max(xmax, c.x);
    ymin = std::min(ymin, c.y);
    ymax = std::max(ymax, c.y);
  }
  const auto rows = static_cast<double>(cfg.out_rows());
  const auto cols = static_cast<double>(cfg.out_cols());
  const double dx = cfg.x.span() / cols;
  const double dy = cfg.y.span() / rows;
  const double c_lo = std::floor((xmin - cfg.x.min) / dx - 0.5) - 1.0;
  const double c_hi = std::ceil((xmax - cfg.x.min) / dx - 0.5) + 1.0;
  const double r_lo = std::floor((ymin - cfg.y.min) / dy - 0.5) - 1.0;
  const double r_hi = std::ceil((ymax - cfg.y.min) / dy - 0.5) + 1.0;
  CellWindow w;
  if (c_hi < 0.0 || r_hi < 0.0 || c_lo > cols - 1.0 || r_lo > rows - 1.0) return w;
  w.col_lo = static_cast<std::size_t>(std::max(0.0, c_lo));
  w.col_hi = static_cast<std::size_t>(std::min(cols - 1.0, c_hi));
  w.row_lo = static_cast<std::size_t>(std::max(0.0, r_lo));
  w.row_hi = static_cast<std::size_t>(std::min(rows - 1.0, r_hi));
  w.empty = false;
  return w;
}

template <typename Fn>
void for_each_interior_cell(const Box3D& box, const GridConfig& cfg, Fn&& fn) {
  const CellWindow w = window_for(box, cfg);
  if (w.empty) return;
  for (std::size_t i = w.row_lo; i <= w.row_hi; ++i) {
    for (std::size_t j = w.col_lo; j <= w.col_hi; ++j) {
      const Vec2 c = cell_center(i, j, cfg);
      if (point_in_box_bev(c, box)) fn(Cell{i, j}, c);
    }
  }
}

}  // namespace detail

/// Occupied cells whose centers are inside the box, in (row, col) order.
inline std::vector<Cell> find_spots(const OccupancyGrid& occ, const GroundTruth& gt, const GridConfig& cfg) {
  std::vector<Cell> spots;
  detail::for_each_interior_cell(gt.box, cfg, [&](Cell c, Vec2) {
    if (occ.at(c.row, c.col)) spots.push_back(c);
  });
  return spots;
}

/// The M spots nearest the box center in BEV; ties broken by (row, col).
inline std::vector<Cell> select_hotspots(std::span<const Cell> spots, const GroundTruth& gt, double C,
                                         const GridConfig& cfg) {
  const std::size_t m = max_hotspots(gt, C);
  struct Ranked {
    double d2;
    Cell cell;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(spots.size());
  for (const Cell& c : spots) ranked.push_back({detail::center_dist2(cell_center(c.row, c.col, cfg), gt.box), c});
  auto less = [](const Ranked& a, const Ranked& b) { return std::tie(a.d2, a.cell) < std::tie(b.d2, b.cell); };
  const std::size_t keep = std::min(m, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), less);
  std::vector<Cell> out;
  out.reserve(keep);
  for (std::size_t k = 0; k < keep; ++k) out.push_back(ranked[k].cell);
  return out;
}

struct Hotspot {
  Cell cell;
  std::size_t object = 0;
  std::size_t class_id = 0;
  std::size_t rank = 0;  // 0 = nearest to the object center
  BoxTargets targets;
  SpatialRelationTarget relation;
};

struct AssignmentMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  RelationEncoding encoding = RelationEncoding::Quadrant;
  std::vector<CellState> state;
  std::vector<std::int32_t> owner;          // owning object for in-box cells, else -1
  std::vector<std::int32_t> hotspot_index;  // index into `hotspots`, else -1
  std::vector<Hotspot> hotspots;            // grouped by object, nearest first
  std::vector<std::size_t> max_per_object;  // M for each object
  std::vector<std::size_t> spots_per_object;

  std::size_t index(std::size_t i, std::size_t j) const noexcept { return i * cols + j; }
  CellState at(std::size_t i, std::size_t j) const noexcept { return state[index(i, j)]; }

  std::vector<std::size_t> hotspots_per_object() const {
    std::vector<std::size_t> n(max_per_object.size(), 0);
    for (const auto& h : hotspots) ++n[h.object];
    return n;
  }
  std::size_t count(CellState s) const {
    return static_cast<std::size_t>(std::count(state.begin(), state.end(), s));
  }
};

/// Builds per-cell supervision for one scene.
///
/// A cell inside several boxes belongs to the box with the nearest center
/// (lower object index on ties). Hotspots are chosen per object among the
/// occupied cells it owns.
inline AssignmentMap build_assignment(const OccupancyGrid& occ, std::span<const GroundTruth> gts, double C,
                                      int num_classes, RelationEncoding encoding, const GridConfig& cfg) {
  if (num_classes <= 0) throw ConfigError("number of classes must be positive");
  if (!(C > 0.0)) throw ConfigError("C must be positive");
  cfg.validate();
  if (occ.rows != cfg.out_rows() || occ.cols != cfg.out_cols()) {
    throw DomainError("occupancy grid does not match grid configuration");
  }

  AssignmentMap map;
  map.rows = occ.rows;
  map.cols = occ.cols;
  map.encoding = encoding;
  const std::size_t n_cells = occ.rows * occ.cols;
  map.state.assign(n_cells, CellState::Negative);
  map.owner.assign(n_cells, -1);
  map.hotspot_index.assign(n_cells, -1);

  std::vector<double> best(n_cells, std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < gts.size(); ++k) {
    validate(gts[k].box);
    if (gts[k].class_id >= static_cast<std::size_t>(num_classes)) {
      throw DomainError("ground truth class id out of range");
    }
    detail::for_each_interior_cell(gts[k].box, cfg, [&](Cell c, Vec2 center) {
      const std::size_t idx = map.index(c.row, c.col);
      const double d2 = detail::center_dist2(center, gts[k].box);
      if (d2 < best[idx]) {
        best[idx] = d2;
        map.owner[idx] = static_cast<std::int32_t>(k);
      }
    });
  }

  std::vector<std::vector<Cell>> spots(gts.size());
  for (std::size_t i = 0; i < map.rows; ++i) {
    for (std::size_t j = 0; j < map.cols; ++j) {
      const std::size_t idx = map.index(i, j);
      if (map.owner[idx] < 0) continue;
      map.state[idx] = CellState::Ignored;
      if (occ.occupied[idx]) spots[static_cast<std::size_t>(map.owner[idx])].push_back({i, j});
    }
  }

  map.max_per_object.resize(gts.size());
  map.spots_per_object.resize(gts.size());
  for (std::size_t k = 0; k < gts.size(); ++k) {
    map.max_per_object[k] = max_hotspots(gts[k], C);
    map.spots_per_object[k] = spots[k].size();
    const auto chosen = select_hotspots(spots[k], gts[k], C, cfg);
    for (std::size_t r = 0; r < chosen.size(); ++r) {
      const Cell c = chosen[r];
      const Vec2 center = cell_center(c.row, c.col, cfg);
      const std::size_t idx = map.index(c.row, c.col);
      map.state[idx] = CellState::Hotspot;
      map.hotspot_index[idx] = static_cast<std::int32_t>(map.hotspots.size());
      map.hotspots.push_back({c, k, gts[k].class_id, r, encode_box(gts[k].box, center),
                              spatial_relation_label(center, gts[k].box, encoding)});
    }
  }
  return map;
}

}  // namespace ohs
