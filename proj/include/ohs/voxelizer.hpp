// SPDX-License-Identifier: Apache-2.0
//
// Point binning into the input voxel grid, and the BEV occupancy map at
// backbone-output resolution on which hotspots live.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ohs/error.hpp"
#include "ohs/geometry.hpp"

namespace ohs {

struct Range {
  double min = 0.0;
  double max = 1.0;

  double span() const noexcept { return max - min; }
  friend bool operator==(const Range&, const Range&) = default;
};

struct GridConfig {
  Range x{0.0, 70.4};
  Range y{-40.0, 40.0};
  Range z{-3.0, 1.0};
  double vx = 0.025, vy = 0.025, vz = 0.05;
  std::size_t max_points_per_voxel = 5;
  std::size_t downsample = 8;

  friend bool operator==(const GridConfig&, const GridConfig&) = default;

  static std::size_t cells_along(const Range& r, double size, const char* axis) {
    if (!(r.max > r.min) || !(size > 0.0)) {
      throw ConfigError(std::string("grid: empty range or non-positive voxel size on ") + axis);
    }
    const double n = r.span() / size;
    const double k = std::round(n);
    if (k < 1.0 || std::abs(n - k) > 1e-6 * std::max(1.0, k)) {
      throw ConfigError(std::string("grid: range is not an integral number of voxels on ") + axis);
    }
    return static_cast<std::size_t>(k);
  }

  std::size_t nx() const { return cells_along(x, vx, "x"); }
  std::size_t ny() const { return cells_along(y, vy, "y"); }
  std::size_t nz() const { return cells_along(z, vz, "z"); }

  /// BEV output rows (indexed by y) and columns (indexed by x).
  std::size_t out_rows() const { return ny() / downsample; }
  std::size_t out_cols() const { return nx() / downsample; }

  void validate() const {
    if (downsample < 1) throw ConfigError("grid: downsample must be >= 1");
    if (max_points_per_voxel < 1) throw ConfigError("grid: max_points_per_voxel must be >= 1");
    const std::size_t gx = nx(), gy = ny();
    nz();
    if (gx % downsample != 0 || gy % downsample != 0) {
      throw ConfigError("grid: downsample must divide the BEV grid dimensions");
    }
  }
};

struct VoxelIndex {
  std::size_t ix = 0, iy = 0, iz = 0;
  friend auto operator<=>(const VoxelIndex&, const VoxelIndex&) = default;
};

struct Voxel {
  VoxelIndex index;
  std::size_t count = 0;      // retained points, <= max_points_per_voxel
  Point3 mean;                // averaged (x, y, z, intensity)
  std::vector<Point3> points; // the retained points, canonical order
};

/// Sparse voxel set, sorted by (iz, iy, ix).
struct VoxelGrid {
  std::vector<Voxel> voxels;

  bool empty() const noexcept { return voxels.empty(); }
  std::size_t size() const noexcept { return voxels.size(); }

  const Voxel* find(VoxelIndex idx) const {
    auto key = [](const VoxelIndex& v) { return std::tie(v.iz, v.iy, v.ix); };
    auto it = std::lower_bound(voxels.begin(), voxels.end(), idx,
                               [&](const Voxel& v, const VoxelIndex& k) { return key(v.index) < key(k); });
    if (it == voxels.end() || it->index != idx) return nullptr;
    return &*it;
  }
};

/// Voxel containing `p`, or nothing when it falls outside the half-open ranges.
inline std::optional<VoxelIndex> voxel_of(const Point3& p, const GridConfig& cfg) {
  const std::size_t gx = cfg.nx(), gy = cfg.ny(), gz = cfg.nz();
  auto bin = [](double v, const Range& r, double size, std::size_t n) -> std::optional<std::size_t> {
    if (!(v >= r.min && v < r.max)) return std::nullopt;
    const double f = std::floor((v - r.min) / size);
    if (f < 0.0 || f >= static_cast<double>(n)) return std::nullopt;
    return static_cast<std::size_t>(f);
  };
  auto ix = bin(p.x, cfg.x, cfg.vx, gx);
  auto iy = bin(p.y, cfg.y, cfg.vy, gy);
  auto iz = bin(p.z, cfg.z, cfg.vz, gz);
  if (!ix || !iy || !iz) return std::nullopt;
  return VoxelIndex{*ix, *iy, *iz};
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline bool point_less(const Point3& a, const Point3& b) {
  return std::tie(a.x, a.y, a.z, a.intensity) < std::tie(b.x, b.y, b.z, b.intensity);
}

}  // namespace detail

/// Bins points into voxels, keeping at most `max_points_per_voxel` per voxel.
///
/// Points in a voxel are put in canonical (lexicographic) order before a
/// Fisher-Yates selection seeded by (seed, voxel index), so the result does
/// not depend on input order or on how voxels are scheduled.
inline VoxelGrid voxelize(std::span<const Point3> points, const GridConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t gx = cfg.nx(), gy = cfg.ny();

  struct Binned {
    std::uint64_t key;
    Point3 p;
  };
  std::vector<Binned> binned;
  binned.reserve(points.size());
  for (const auto& p : points) {
    if (auto v = voxel_of(p, cfg)) {
      binned.push_back({(static_cast<std::uint64_t>(v->iz) * gy + v->iy) * gx + v->ix, p});
    }
  }
  std::sort(binned.begin(), binned.end(), [](const Binned& a, const Binned& b) {
    if (a.key != b.key) return a.key < b.key;
    return detail::point_less(a.p, b.p);
  });

  VoxelGrid grid;
  for (std::size_t i = 0; i < binned.size();) {
    std::size_t j = i;
    while (j < binned.size() && binned[j].key == binned[i].key) ++j;

    Voxel vox;
    const std::uint64_t key = binned[i].key;
    vox.index = {static_cast<std::size_t>(key % gx), static_cast<std::size_t>((key / gx) % gy),
                 static_cast<std::size_t>(key / (static_cast<std::uint64_t>(gx) * gy))};
    vox.points.reserve(j - i);
    for (std::size_t k = i; k < j; ++k) vox.points.push_back(binned[k].p);

    if (vox.points.size() > cfg.max_points_per_voxel) {
      std::mt19937_64 rng(detail::splitmix64(seed ^ detail::splitmix64(key)));
      const std::size_t n = vox.points.size();
      for (std::size_t k = 0; k < cfg.max_points_per_voxel; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, n - 1);
        std::swap(vox.points[k], vox.points[pick(rng)]);
      }
      vox.points.resize(cfg.max_points_per_voxel);
      std::sort(vox.points.begin(), vox.points.end(), detail::point_less);
    }

    vox.count = vox.points.size();
    Point3 sum;
    for (const auto& p : vox.points) {
      sum.x += p.x;
      sum.y += p.y;
      sum.z += p.z;
      sum.intensity += p.intensity;
    }
    const double inv = 1.0 / static_cast<double>(vox.count);
    vox.mean = {sum.x * inv, sum.y * inv, sum.z * inv, sum.intensity * inv};
    grid.voxels.push_back(std::move(vox));
    i = j;
  }
  return grid;
}

/// BEV occupancy at output resolution. Row index follows y, column index follows x.
struct OccupancyGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> occupied;
  std::vector<std::uint32_t> point_counts;

  OccupancyGrid() = default;
  OccupancyGrid(std::size_t r, std::size_t c)
      : rows(r), cols(c), occupied(r * c, 0), point_counts(r * c, 0) {}

  std::size_t index(std::size_t i, std::size_t j) const noexcept { return i * cols + j; }
  bool at(std::size_t i, std::size_t j) const noexcept { return occupied[index(i, j)] != 0; }
  std::size_t num_occupied() const noexcept {
    return static_cast<std::size_t>(std::count(occupied.begin(), occupied.end(), std::uint8_t{1}));
  }
};

inline OccupancyGrid bev_occupancy(const VoxelGrid& grid, const GridConfig& cfg) {
  cfg.validate();
  OccupancyGrid occ(cfg.out_rows(), cfg.out_cols());
  for (const auto& v : grid.voxels) {
    const std::size_t i = v.index.iy / cfg.downsample;
    const std::size_t j = v.index.ix / cfg.downsample;
    occ.occupied[occ.index(i, j)] = 1;
    occ.point_counts[occ.index(i, j)] += static_cast<std::uint32_t>(v.count);
  }
  return occ;
}

/// Center of output cell (i, j): row i along y, column j along x.
inline Vec2 cell_center(std::size_t i, std::size_t j, const GridConfig& cfg) {
  const std::size_t rows = cfg.out_rows();
  const std::size_t cols = cfg.out_cols();
  if (i >= rows || j >= cols) throw DomainError("cell_center: cell index out of range");
  return {((static_cast<double>(j) + 0.5) / static_cast<double>(cols)) * cfg.x.span() + cfg.x.min,
          ((static_cast<double>(i) + 0.5) / static_cast<double>(rows)) * cfg.y.span() + cfg.y.min};
}

/// Output cell containing a BEV location, if within range.
inline std::optional<std::pair<std::size_t, std::size_t>> cell_of(Vec2 p, const GridConfig& cfg) {
  const std::size_t rows = cfg.out_rows();
  const std::size_t cols = cfg.out_cols();
  const double fj = std::floor((p.x - cfg.x.min) / cfg.x.span() * static_cast<double>(cols));
  const double fi = std::floor((p.y - cfg.y.min) / cfg.y.span() * static_cast<double>(rows));
  if (fi < 0.0 || fj < 0.0 || fi >= static_cast<double>(rows) || fj >= static_cast<double>(cols)) {
    return std::nullopt;
  }
  return std::pair{static_cast<std::size_t>(fi), static_cast<std::size_t>(fj)};
}

}  // namespace ohs
