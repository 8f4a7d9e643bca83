// SPDX-License-Identifier: Apache-2.0
//
// Training losses over a head tensor with analytic gradients.
//
// Every loss returns a gradient tensor shaped like the head it was given, so
// the weighted total gradient is a plain sum of the three branches.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ohs/assignment.hpp"
#include "ohs/codec.hpp"
#include "ohs/error.hpp"

namespace ohs {

inline constexpr double kProbEps = 1e-7;

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0) || !(gamma >= 0.0)) {
      throw ConfigError("focal parameters require alpha in (0,1) and gamma >= 0");
    }
  }
};

struct LossWeights {
  double delta = 1.0;  // classification
  double beta = 1.0;   // box regression
  double zeta = 1.0;   // spatial relation

  static LossWeights kitti() { return {1.0, 1.0, 1.0}; }
  static LossWeights nuscenes() { return {1.0, 0.25, 0.25}; }

  void validate() const {
    if (delta < 0.0 || beta < 0.0 || zeta < 0.0 || (delta == 0.0 && beta == 0.0 && zeta == 0.0)) {
      throw ConfigError("loss weights must be nonnegative and not all zero");
    }
  }
};

struct ScalarLoss {
  double value = 0.0;
  double grad = 0.0;
};

struct LossResult {
  double value = 0.0;
  HeadOutput grad;
};

/// -alpha (1-q)^gamma log q with q = p for hotspots and 1-p otherwise.
/// p is clamped to [eps, 1-eps]; the gradient is evaluated at the clamped value.
inline ScalarLoss focal_loss(double p, bool is_hotspot, const FocalParams& fp) {
  const double pc = std::clamp(p, kProbEps, 1.0 - kProbEps);
  const double q = is_hotspot ? pc : 1.0 - pc;
  const double one_minus = 1.0 - q;
  const double mod = std::pow(one_minus, fp.gamma);
  const double log_q = std::log(q);
  double dq = -fp.alpha * mod / q;
  if (fp.gamma != 0.0) dq += fp.alpha * fp.gamma * std::pow(one_minus, fp.gamma - 1.0) * log_q;
  return {-fp.alpha * mod * log_q, is_hotspot ? dq : -dq};
}

/// Binary cross-entropy -[q log p + (1-q) log(1-p)] with clamped p.
inline ScalarLoss binary_cross_entropy(double p, double target) {
  const double pc = std::clamp(p, kProbEps, 1.0 - kProbEps);
  return {-(target * std::log(pc) + (1.0 - target) * std::log(1.0 - pc)),
          -(target / pc) + (1.0 - target) / (1.0 - pc)};
}

inline ScalarLoss smooth_l1(double x) {
  const double ax = std::abs(x);
  if (ax < 1.0) return {0.5 * x * x, x};
  return {ax - 0.5, x > 0.0 ? 1.0 : -1.0};
}

namespace detail {

inline void check_dims(const HeadOutput& head, const AssignmentMap& map) {
  if (head.rows != map.rows || head.cols != map.cols) {
    throw DomainError("head output and assignment map dimensions differ");
  }
}

/// Branch bodies shared by the gradient and value-only paths; `grad_out` may be null.
inline double classification_loss(const HeadOutput& head, const AssignmentMap& map, const FocalParams& fp,
                                  HeadOutput* grad_out) {
  check_dims(head, map);
  double value = 0.0;
  const std::size_t k_classes = head.layout.num_classes;
  std::size_t contributing = 0;
  for (std::size_t idx = 0; idx < map.state.size(); ++idx) {
    const CellState s = map.state[idx];
    if (s == CellState::Ignored) continue;
    ++contributing;
    std::size_t positive = k_classes;
    if (s == CellState::Hotspot) positive = map.hotspots[static_cast<std::size_t>(map.hotspot_index[idx])].class_id;
    const auto scores = head.cell(idx);
    for (std::size_t k = 0; k < k_classes; ++k) {
      const ScalarLoss l = focal_loss(scores[k], k == positive, fp);
      value += l.value;
      if (grad_out) grad_out->cell(idx)[k] = l.grad;
    }
  }
  if (contributing == 0) return value;
  const double inv = 1.0 / static_cast<double>(contributing);
  if (grad_out) {
    for (double& g : grad_out->data) g *= inv;
  }
  return value * inv;
}

inline double regression_loss(const HeadOutput& head, const AssignmentMap& map, HeadOutput* grad_out) {
  check_dims(head, map);
  double value = 0.0;
  if (map.hotspots.empty()) return value;
  const HeadLayout& layout = head.layout;
  const double inv = 1.0 / static_cast<double>(map.hotspots.size());
  for (const Hotspot& h : map.hotspots) {
    const auto cell = head.cell(h.cell.row, h.cell.col);
    for (std::size_t k = 0; k < kNumTargets; ++k) {
      const auto t = static_cast<Target>(k);
      const std::size_t off = layout.target_offset(t);
      const double pred = predicted_target(cell, layout, t);
      const ScalarLoss l = smooth_l1(pred - h.targets[t]);
      value += l.value * inv;
      if (!grad_out) continue;
      auto grad = grad_out->cell(h.cell.row, h.cell.col);
      if (const auto& spec = layout.specs[t]) {
        const auto dt = softargmin_grad(cell.subspan(off, spec->n), *spec);
        for (std::size_t i = 0; i < spec->n; ++i) grad[off + i] += l.grad * dt[i] * inv;
      } else {
        grad[off] += l.grad * inv;
      }
    }
  }
  return value;
}

inline double spatial_relation_loss(const HeadOutput& head, const AssignmentMap& map, HeadOutput* grad_out) {
  check_dims(head, map);
  double value = 0.0;
  const RelationEncoding enc = head.layout.relation;
  if (map.hotspots.empty() || enc == RelationEncoding::None) return value;
  if (enc != map.encoding) throw DomainError("head relation channels do not match assignment encoding");
  const std::size_t off = head.layout.relation_offset();
  const std::size_t width = relation_width(enc);
  const double inv = 1.0 / static_cast<double>(map.hotspots.size());
  for (const Hotspot& h : map.hotspots) {
    const auto cell = head.cell(h.cell.row, h.cell.col);
    for (std::size_t i = 0; i < width; ++i) {
      const ScalarLoss l = is_categorical(enc) ? binary_cross_entropy(cell[off + i], h.relation.values[i])
                                               : smooth_l1(cell[off + i] - h.relation.values[i]);
      value += l.value * inv;
      if (grad_out) grad_out->cell(h.cell.row, h.cell.col)[off + i] += l.grad * inv;
    }
  }
  return value;
}

}  // namespace detail

/// Focal loss over every (cell, class) pair outside ignored cells, averaged
/// over the number of contributing cells. Ignored cells get zero gradient.
inline LossResult classification_loss(const HeadOutput& head, const AssignmentMap& map, const FocalParams& fp) {
  LossResult out{0.0, head.zeros_like()};
  out.value = detail::classification_loss(head, map, fp, &out.grad);
  return out;
}

/// Smooth L1 on each of the eight decoded targets at hotspot cells, averaged
/// over hotspots. Binned targets are compared after soft-argmin decoding.
inline LossResult regression_loss(const HeadOutput& head, const AssignmentMap& map) {
  LossResult out{0.0, head.zeros_like()};
  out.value = detail::regression_loss(head, map, &out.grad);
  return out;
}

/// Spatial relation loss at hotspot cells, averaged over hotspots.
///
/// Categorical encodings use per-channel binary cross-entropy on scores in
/// (0,1); the deviation encoding uses smooth L1 on its two raw channels.
inline LossResult spatial_relation_loss(const HeadOutput& head, const AssignmentMap& map) {
  LossResult out{0.0, head.zeros_like()};
  out.value = detail::spatial_relation_loss(head, map, &out.grad);
  return out;
}

/// The quadrant branch: four BCE terms per hotspot.
inline LossResult quadrant_loss(const HeadOutput& head, const AssignmentMap& map) {
  if (head.layout.relation != RelationEncoding::Quadrant) {
    throw DomainError("quadrant_loss requires a head with quadrant relation channels");
  }
  return spatial_relation_loss(head, map);
}

inline double total_loss(double cls, double loc, double q, const LossWeights& w) {
  return w.delta * cls + w.beta * loc + w.zeta * q;
}

struct CompositeLoss {
  double cls = 0.0;
  double loc = 0.0;
  double rel = 0.0;
  double total = 0.0;
  HeadOutput grad;
};

/// Weighted sum of the three branches with the matching gradient.
inline CompositeLoss composite_loss(const HeadOutput& head, const AssignmentMap& map, const FocalParams& fp,
                                    const LossWeights& w) {
  auto c = classification_loss(head, map, fp);
  auto r = regression_loss(head, map);
  auto q = spatial_relation_loss(head, map);
  CompositeLoss out{c.value, r.value, q.value, total_loss(c.value, r.value, q.value, w), head.zeros_like()};
  for (std::size_t i = 0; i < out.grad.data.size(); ++i) {
    out.grad.data[i] = w.delta * c.grad.data[i] + w.beta * r.grad.data[i] + w.zeta * q.grad.data[i];
  }
  return out;
}

/// The composite total alone, without building gradients.
inline double composite_loss_value(const HeadOutput& head, const AssignmentMap& map, const FocalParams& fp,
                                   const LossWeights& w) {
  return total_loss(detail::classification_loss(head, map, fp, nullptr), detail::regression_loss(head, map, nullptr),
                    detail::spatial_relation_loss(head, map, nullptr), w);
}

}  // namespace ohs
