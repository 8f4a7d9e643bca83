// SPDX-License-Identifier: Apache-2.0
//
// Regression targets, the soft-argmin binned encoding, and the dense head
// tensor that carries per-cell network outputs.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ohs/error.hpp"
#include "ohs/geometry.hpp"
#include "ohs/voxelizer.hpp"

namespace ohs {

/// Components of the 8-dimensional box regression target, in channel order.
enum class Target : std::size_t { Dx = 0, Dy, Z, LogL, LogW, LogH, CosR, SinR };
inline constexpr std::size_t kNumTargets = 8;
inline constexpr std::array<const char*, kNumTargets> kTargetNames{
    "dx", "dy", "z", "log_l", "log_w", "log_h", "cos_r", "sin_r"};

struct BoxTargets {
  std::array<double, kNumTargets> v{};

  double& operator[](Target t) { return v[static_cast<std::size_t>(t)]; }
  double operator[](Target t) const { return v[static_cast<std::size_t>(t)]; }
  friend bool operator==(const BoxTargets&, const BoxTargets&) = default;
};

/// dx/dy point from the hotspot center to the object centroid.
inline BoxTargets encode_box(const Box3D& box, Vec2 hotspot_center) {
  validate(box);
  BoxTargets t;
  t[Target::Dx] = box.cx - hotspot_center.x;
  t[Target::Dy] = box.cy - hotspot_center.y;
  t[Target::Z] = box.cz;
  t[Target::LogL] = std::log(box.l);
  t[Target::LogW] = std::log(box.w);
  t[Target::LogH] = std::log(box.h);
  t[Target::CosR] = std::cos(box.yaw);
  t[Target::SinR] = std::sin(box.yaw);
  return t;
}

/// Interval [a, b] split into n equal bins.
struct SoftArgminSpec {
  double a = -4.0;
  double b = 4.0;
  std::size_t n = 16;

  double bin_width() const noexcept { return (b - a) / static_cast<double>(n); }
  double center(std::size_t i) const noexcept {
    return a + (static_cast<double>(i) + 0.5) * bin_width();
  }
  void validate() const {
    if (!(a < b) || n < 2 || !std::isfinite(a) || !std::isfinite(b)) {
      throw ConfigError("soft-argmin spec requires a < b and at least 2 bins");
    }
  }
  friend bool operator==(const SoftArgminSpec&, const SoftArgminSpec&) = default;
};

namespace detail {

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> s(logits.begin(), logits.end());
  const double mx = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double& x : s) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : s) x /= z;
  return s;
}

}  // namespace detail

/// Expectation of the bin centers under softmax(logits).
inline double softargmin(std::span<const double> logits, const SoftArgminSpec& spec) {
  if (logits.size() != spec.n) throw DomainError("softargmin: logit count does not match bin count");
  const auto s = detail::softmax(logits);
  double t = 0.0;
  for (std::size_t i = 0; i < spec.n; ++i) t += s[i] * spec.center(i);
  return t;
}

/// d t / d logit_i = S_i (C_i - t).
inline std::vector<double> softargmin_grad(std::span<const double> logits, const SoftArgminSpec& spec) {
  if (logits.size() != spec.n) throw DomainError("softargmin_grad: logit count does not match bin count");
  const auto s = detail::softmax(logits);
  double t = 0.0;
  for (std::size_t i = 0; i < spec.n; ++i) t += s[i] * spec.center(i);
  std::vector<double> g(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) g[i] = s[i] * (spec.center(i) - t);
  return g;
}

/// How a target value is written into bin logits when synthesizing head outputs.
enum class LogitEncoding {
  Saturated,     // +magnitude on the bin containing the value, 0 elsewhere
  Interpolated,  // mass split over the two neighbouring centers so the expectation is exact
};

inline std::vector<double> saturated_logits(double value, const SoftArgminSpec& spec, double magnitude = 40.0) {
  const double f = std::floor((value - spec.a) / spec.bin_width());
  const auto bin = static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(spec.n - 1)));
  std::vector<double> logits(spec.n, 0.0);
  logits[bin] = magnitude;
  return logits;
}

/// Values outside [C_0, C_{n-1}] are clamped to the end centers.
inline std::vector<double> interpolated_logits(double value, const SoftArgminSpec& spec) {
  constexpr double kFloor = -80.0;
  std::vector<double> logits(spec.n, kFloor);
  const double pos = std::clamp((value - spec.a) / spec.bin_width() - 0.5, 0.0,
                                static_cast<double>(spec.n - 1));
  const auto lo = std::min(static_cast<std::size_t>(std::floor(pos)), spec.n - 2);
  const double w_hi = pos - static_cast<double>(lo);
  const double w_lo = 1.0 - w_hi;
  if (w_lo > 0.0) logits[lo] = std::max(kFloor, std::log(w_lo));
  if (w_hi > 0.0) logits[lo + 1] = std::max(kFloor, std::log(w_hi));
  return logits;
}

/// Spatial-relation target variants for the auxiliary head branch.
enum class RelationEncoding { None, LeftRight, FrontBack, Quadrant, EightDir, Deviation };

inline std::size_t relation_width(RelationEncoding e) {
  switch (e) {
    case RelationEncoding::None: return 0;
    case RelationEncoding::LeftRight:
    case RelationEncoding::FrontBack:
    case RelationEncoding::Deviation: return 2;
    case RelationEncoding::Quadrant: return 4;
    case RelationEncoding::EightDir: return 8;
  }
  return 0;
}

inline bool is_categorical(RelationEncoding e) {
  return e != RelationEncoding::None && e != RelationEncoding::Deviation;
}

inline const char* to_string(RelationEncoding e) {
  switch (e) {
    case RelationEncoding::None: return "none";
    case RelationEncoding::LeftRight: return "lr";
    case RelationEncoding::FrontBack: return "fb";
    case RelationEncoding::Quadrant: return "quadrant";
    case RelationEncoding::EightDir: return "8dir";
    case RelationEncoding::Deviation: return "deviation";
  }
  return "none";
}

inline RelationEncoding relation_encoding_from_string(const std::string& s) {
  if (s == "none") return RelationEncoding::None;
  if (s == "lr") return RelationEncoding::LeftRight;
  if (s == "fb") return RelationEncoding::FrontBack;
  if (s == "quadrant") return RelationEncoding::Quadrant;
  if (s == "8dir") return RelationEncoding::EightDir;
  if (s == "deviation") return RelationEncoding::Deviation;
  throw ConfigError("unknown spatial relation encoding '" + s + "'");
}

/// Per-target soft-argmin specs; an empty slot means the channel is a raw value.
struct RegressionSpecs {
  std::array<std::optional<SoftArgminSpec>, kNumTargets> bins{};

  const std::optional<SoftArgminSpec>& operator[](Target t) const {
    return bins[static_cast<std::size_t>(t)];
  }
  std::optional<SoftArgminSpec>& operator[](Target t) { return bins[static_cast<std::size_t>(t)]; }

  /// dx, dy over [-4, 4] and z over the vertical range, 16 bins each; sizes and heading raw.
  static RegressionSpecs defaults(const GridConfig& grid) {
    RegressionSpecs s;
    s[Target::Dx] = SoftArgminSpec{-4.0, 4.0, 16};
    s[Target::Dy] = SoftArgminSpec{-4.0, 4.0, 16};
    s[Target::Z] = SoftArgminSpec{grid.z.min, grid.z.max, 16};
    return s;
  }

  void validate() const {
    for (const auto& b : bins) {
      if (b) b->validate();
    }
    if ((*this)[Target::CosR] || (*this)[Target::SinR]) {
      throw ConfigError("heading channels (cos_r, sin_r) are always raw outputs");
    }
  }
  friend bool operator==(const RegressionSpecs&, const RegressionSpecs&) = default;
};

/// Channel layout of a head tensor cell: class scores, regression, relation.
struct HeadLayout {
  std::size_t num_classes = 3;
  RegressionSpecs specs;
  RelationEncoding relation = RelationEncoding::Quadrant;

  std::size_t target_width(Target t) const { return specs[t] ? specs[t]->n : 1; }
  std::size_t target_offset(Target t) const {
    std::size_t off = num_classes;
    for (std::size_t k = 0; k < static_cast<std::size_t>(t); ++k) off += target_width(static_cast<Target>(k));
    return off;
  }
  std::size_t relation_offset() const {
    return target_offset(Target::SinR) + target_width(Target::SinR);
  }
  std::size_t channels() const { return relation_offset() + relation_width(relation); }

  std::vector<std::string> channel_names(const std::vector<std::string>& class_names = {}) const {
    std::vector<std::string> names;
    for (std::size_t k = 0; k < num_classes; ++k) {
      names.push_back("cls:" + (k < class_names.size() ? class_names[k] : std::to_string(k)));
    }
    for (std::size_t t = 0; t < kNumTargets; ++t) {
      const auto tt = static_cast<Target>(t);
      if (specs[tt]) {
        for (std::size_t i = 0; i < specs[tt]->n; ++i) {
          names.push_back(std::string(kTargetNames[t]) + ":bin" + std::to_string(i));
        }
      } else {
        names.emplace_back(kTargetNames[t]);
      }
    }
    for (std::size_t i = 0; i < relation_width(relation); ++i) {
      names.push_back(std::string("rel:") + to_string(relation) + ":" + std::to_string(i));
    }
    return names;
  }

  void validate() const {
    if (num_classes < 1) throw ConfigError("head layout needs at least one class");
    specs.validate();
  }
  friend bool operator==(const HeadLayout&, const HeadLayout&) = default;
};

/// Dense row-major head tensor: rows x cols cells, `layout.channels()` values each.
struct HeadOutput {
  HeadLayout layout;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  HeadOutput() = default;
  HeadOutput(HeadLayout l, std::size_t r, std::size_t c)
      : layout(std::move(l)), rows(r), cols(c), data(r * c * layout.channels(), 0.0) {}

  std::size_t channels() const { return layout.channels(); }
  std::size_t cell_index(std::size_t i, std::size_t j) const noexcept { return i * cols + j; }

  std::span<double> cell(std::size_t i, std::size_t j) {
    const std::size_t c = channels();
    return {data.data() + cell_index(i, j) * c, c};
  }
  std::span<const double> cell(std::size_t i, std::size_t j) const {
    const std::size_t c = channels();
    return {data.data() + cell_index(i, j) * c, c};
  }
  std::span<double> cell(std::size_t flat) {
    const std::size_t c = channels();
    return {data.data() + flat * c, c};
  }
  std::span<const double> cell(std::size_t flat) const {
    const std::size_t c = channels();
    return {data.data() + flat * c, c};
  }
  /// A zero tensor with the same shape, used for gradients.
  HeadOutput zeros_like() const { return HeadOutput(layout, rows, cols); }
};

/// Value of one regression target predicted at a cell.
inline double predicted_target(std::span<const double> cell, const HeadLayout& layout, Target t) {
  const std::size_t off = layout.target_offset(t);
  if (const auto& spec = layout.specs[t]) return softargmin(cell.subspan(off, spec->n), *spec);
  return cell[off];
}

/// Writes `targets` into the regression channels of one cell.
inline void write_targets(std::span<double> cell, const HeadLayout& layout, const BoxTargets& targets,
                          LogitEncoding mode) {
  for (std::size_t k = 0; k < kNumTargets; ++k) {
    const auto t = static_cast<Target>(k);
    const std::size_t off = layout.target_offset(t);
    if (const auto& spec = layout.specs[t]) {
      const auto logits = mode == LogitEncoding::Saturated ? saturated_logits(targets[t], *spec)
                                                           : interpolated_logits(targets[t], *spec);
      std::copy(logits.begin(), logits.end(), cell.begin() + static_cast<std::ptrdiff_t>(off));
    } else {
      cell[off] = targets[t];
    }
  }
}

/// Box predicted at output cell (i, j); nothing if the decoded size is not finite.
inline std::optional<Box3D> decode_box(std::size_t i, std::size_t j, std::span<const double> cell,
                                       const HeadLayout& layout, const GridConfig& grid) {
  const Vec2 hc = cell_center(i, j, grid);
  Box3D b;
  b.cx = hc.x + predicted_target(cell, layout, Target::Dx);
  b.cy = hc.y + predicted_target(cell, layout, Target::Dy);
  b.cz = predicted_target(cell, layout, Target::Z);
  b.l = std::exp(predicted_target(cell, layout, Target::LogL));
  b.w = std::exp(predicted_target(cell, layout, Target::LogW));
  b.h = std::exp(predicted_target(cell, layout, Target::LogH));
  b.yaw = normalize_angle(std::atan2(predicted_target(cell, layout, Target::SinR),
                                     predicted_target(cell, layout, Target::CosR)));
  if (!is_valid(b)) return std::nullopt;
  return b;
}

}  // namespace ohs
