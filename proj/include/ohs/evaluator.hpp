// SPDX-License-Identifier: Apache-2.0
//
// KITTI-style evaluation: greedy score-ordered matching, AP interpolated at
// 40 recall points, and recall bucketed by per-object point counts.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ohs/assignment.hpp"
#include "ohs/error.hpp"
#include "ohs/geometry.hpp"
#include "ohs/inference.hpp"

namespace ohs {

enum class IouMode { Bev, ThreeD };

inline const char* to_string(IouMode m) { return m == IouMode::Bev ? "bev" : "3d"; }

enum class Difficulty { Easy = 0, Moderate = 1, Hard = 2, All = 3 };

inline const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Moderate: return "moderate";
    case Difficulty::Hard: return "hard";
    case Difficulty::All: return "all";
  }
  return "all";
}

inline double box_iou(const Box3D& a, const Box3D& b, IouMode mode) {
  return mode == IouMode::Bev ? rotated_iou_bev(a, b) : iou_3d(a, b);
}

struct EvalConfig {
  std::vector<double> iou_thresholds{0.7, 0.5, 0.5};  // per class
  IouMode mode = IouMode::ThreeD;

  double threshold(std::size_t class_id) const {
    if (class_id >= iou_thresholds.size()) throw DomainError("no IoU threshold for class");
    return iou_thresholds[class_id];
  }
  void validate() const {
    for (double t : iou_thresholds) {
      if (!(t > 0.0 && t <= 1.0)) throw ConfigError("IoU thresholds must lie in (0,1]");
    }
  }
};

inline constexpr std::size_t kRecallPoints = 40;

struct MatchResult {
  std::vector<int> det_to_gt;     // per detection (input order): matched GT or -1
  std::vector<bool> det_ignored;  // matched a GT excluded by the difficulty filter
  std::vector<int> gt_to_det;     // per GT: matching detection or -1

  bool is_tp(std::size_t d) const { return det_to_gt[d] >= 0 && !det_ignored[d]; }
};

/// Greedy matching for a single scene and class. Detections are visited in
/// score order (total tie-break applied first); each takes the unmatched GT of
/// highest IoU at or above the threshold, lower GT index on ties.
/// `gt_ignored` marks GTs that may absorb a detection without counting.
inline MatchResult match(std::span<const Detection> dets, std::span<const Box3D> gts, double iou_threshold,
                         IouMode mode, std::span<const std::uint8_t> gt_ignored = {}) {
  MatchResult r;
  r.det_to_gt.assign(dets.size(), -1);
  r.det_ignored.assign(dets.size(), false);
  r.gt_to_det.assign(gts.size(), -1);

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (detection_before(dets[a], dets[b])) return true;
    if (detection_before(dets[b], dets[a])) return false;
    return a < b;
  });

  for (std::size_t d : order) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (r.gt_to_det[g] >= 0) continue;
      const double iou = box_iou(dets[d].box, gts[g], mode);
      if (iou >= iou_threshold && iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      r.det_to_gt[d] = best;
      r.gt_to_det[static_cast<std::size_t>(best)] = static_cast<int>(d);
      if (!gt_ignored.empty() && gt_ignored[static_cast<std::size_t>(best)] != 0) r.det_ignored[d] = true;
    }
  }
  return r;
}

struct ScoredMatch {
  double score = 0.0;
  bool tp = false;
};

/// AP over recall points k/40, k = 1..40, using the interpolated precision
/// p(r) = max over r' >= r. Absent when there is no ground truth.
inline std::optional<double> ap40(std::span<const ScoredMatch> matches, std::size_t num_gt) {
  if (num_gt == 0) return std::nullopt;
  std::vector<ScoredMatch> sorted(matches.begin(), matches.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredMatch& a, const ScoredMatch& b) { return a.score > b.score; });

  const std::size_t n = sorted.size();
  std::vector<std::size_t> tp_at(n);
  std::vector<double> precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sorted[i].tp) ++tp;
    tp_at[i] = tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // suffix maxima: best precision at any prefix at least this long
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double sum = 0.0;
  std::size_t first = 0;
  for (std::size_t k = 1; k <= kRecallPoints; ++k) {
    // recall tp/num_gt >= k/40, compared exactly in integers
    while (first < n && tp_at[first] * kRecallPoints < k * num_gt) ++first;
    if (first == n) break;
    sum += precision[first];
  }
  return sum / static_cast<double>(kRecallPoints);
}

/// Inclusive point-count range; `hi` empty means unbounded.
struct PointBucket {
  std::size_t lo = 1;
  std::optional<std::size_t> hi;

  bool contains(std::size_t n) const { return n >= lo && (!hi || n <= *hi); }
  std::string name() const {
    return hi ? std::to_string(lo) + "-" + std::to_string(*hi) : std::to_string(lo - 1) + "+";
  }
};

inline std::vector<PointBucket> default_point_buckets() {
  return {{1, 10}, {11, 50}, {51, 200}, {201, std::nullopt}};
}

struct GtOutcome {
  std::size_t num_points = 0;
  bool detected = false;
};

/// Recall restricted to GTs in each bucket; empty buckets are absent.
inline std::vector<std::optional<double>> recall_by_points(std::span<const GtOutcome> outcomes,
                                                           std::span<const PointBucket> buckets) {
  std::vector<std::optional<double>> out;
  out.reserve(buckets.size());
  for (const auto& b : buckets) {
    std::size_t total = 0, hit = 0;
    for (const auto& o : outcomes) {
      if (!b.contains(o.num_points)) continue;
      ++total;
      if (o.detected) ++hit;
    }
    if (total == 0) out.emplace_back(std::nullopt);
    else out.emplace_back(static_cast<double>(hit) / static_cast<double>(total));
  }
  return out;
}

struct SceneResult {
  std::vector<GroundTruth> gts;
  std::vector<Detection> dets;
};

struct ClassMetrics {
  std::size_t class_id = 0;
  Difficulty difficulty = Difficulty::All;
  IouMode mode = IouMode::ThreeD;
  std::optional<double> ap;
  std::size_t num_gt = 0;
  std::size_t num_det = 0;
  std::size_t num_tp = 0;
};

struct EvalReport {
  std::vector<ClassMetrics> classes;
  std::vector<GtOutcome> outcomes;  // every counted GT across classes and scenes
};

/// Per-class AP over all scenes. GTs harder than `difficulty` are ignored.
inline EvalReport evaluate(std::span<const SceneResult> scenes, std::size_t num_classes, const EvalConfig& cfg,
                           Difficulty difficulty = Difficulty::All) {
  cfg.validate();
  EvalReport report;
  for (std::size_t c = 0; c < num_classes; ++c) {
    ClassMetrics m;
    m.class_id = c;
    m.difficulty = difficulty;
    m.mode = cfg.mode;
    std::vector<ScoredMatch> all;
    for (const auto& scene : scenes) {
      std::vector<Detection> dets;
      for (const auto& d : scene.dets) {
        if (d.class_id == c) dets.push_back(d);
      }
      std::vector<Box3D> boxes;
      std::vector<std::size_t> points;
      std::vector<std::uint8_t> ignored;
      for (const auto& g : scene.gts) {
        if (g.class_id != c) continue;
        boxes.push_back(g.box);
        points.push_back(g.num_points);
        ignored.push_back(difficulty != Difficulty::All && g.difficulty > static_cast<int>(difficulty));
      }
      const MatchResult r = match(dets, boxes, cfg.threshold(c), cfg.mode, ignored);
      for (std::size_t d = 0; d < dets.size(); ++d) {
        if (r.det_ignored[d]) continue;
        all.push_back({dets[d].score, r.is_tp(d)});
        ++m.num_det;
        if (r.is_tp(d)) ++m.num_tp;
      }
      for (std::size_t g = 0; g < boxes.size(); ++g) {
        if (ignored[g]) continue;
        ++m.num_gt;
        report.outcomes.push_back({points[g], r.gt_to_det[g] >= 0});
      }
    }
    m.ap = ap40(all, m.num_gt);
    report.classes.push_back(m);
  }
  return report;
}

}  // namespace ohs
