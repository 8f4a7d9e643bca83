// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <tuple>
#include <vector>

#include "ohs/codec.hpp"
#include "ohs/error.hpp"
#include "ohs/geometry.hpp"

namespace ohs {

struct Detection {
  std::size_t class_id = 0;
  double score = 0.0;
  Box3D box;
  std::size_t row = 0;  // firing cell, used for deterministic ordering
  std::size_t col = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct InferenceConfig {
  double score_threshold = 0.3;
  std::size_t pre_nms_top_k = 100;
  double nms_iou_threshold = 0.01;

  static InferenceConfig kitti() { return {0.3, 100, 0.01}; }
  static InferenceConfig nuscenes() { return {0.1, 80, 0.02}; }

  void validate() const {
    if (!(score_threshold >= 0.0 && score_threshold <= 1.0) ||
        !(nms_iou_threshold >= 0.0 && nms_iou_threshold <= 1.0)) {
      throw ConfigError("inference thresholds must lie in [0,1]");
    }
    if (pre_nms_top_k < 1) throw ConfigError("pre_nms_top_k must be >= 1");
  }
};

/// Total order: score descending, then row-major cell, class, and box fields.
inline bool detection_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  const auto& x = a.box;
  const auto& y = b.box;
  return std::tie(a.row, a.col, a.class_id, x.cx, x.cy, x.cz, x.l, x.w, x.h, x.yaw) <
         std::tie(b.row, b.col, b.class_id, y.cx, y.cy, y.cz, y.l, y.w, y.h, y.yaw);
}

/// Per cell, the arg-max class fires when its score reaches the threshold.
/// Returns the top-k firing cells by score with decoded boxes.
inline std::vector<Detection> extract_candidates(const HeadOutput& head, const InferenceConfig& cfg,
                                                 const GridConfig& grid) {
  cfg.validate();
  if (head.rows != grid.out_rows() || head.cols != grid.out_cols()) {
    throw DomainError("head output does not match grid configuration");
  }
  const std::size_t k_classes = head.layout.num_classes;
  std::vector<Detection> dets;
  for (std::size_t i = 0; i < head.rows; ++i) {
    for (std::size_t j = 0; j < head.cols; ++j) {
      const auto cell = head.cell(i, j);
      std::size_t best = 0;
      for (std::size_t k = 1; k < k_classes; ++k) {
        if (cell[k] > cell[best]) best = k;
      }
      if (!(cell[best] >= cfg.score_threshold)) continue;
      auto box = decode_box(i, j, cell, head.layout, grid);
      if (!box) continue;
      dets.push_back({best, cell[best], *box, i, j});
    }
  }
  const std::size_t keep = std::min(cfg.pre_nms_top_k, dets.size());
  std::partial_sort(dets.begin(), dets.begin() + static_cast<std::ptrdiff_t>(keep), dets.end(),
                    detection_before);
  dets.resize(keep);
  return dets;
}

/// Greedy per-class rotated NMS in BEV. A detection survives when its IoU with
/// every kept detection of its class is at most the threshold.
inline std::vector<Detection> rotated_nms(std::vector<Detection> dets, double iou_threshold) {
  std::sort(dets.begin(), dets.end(), detection_before);
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    bool keep = true;
    for (const auto& k : kept) {
      if (k.class_id == d.class_id && rotated_iou_bev(k.box, d.box) > iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(d);
  }
  return kept;
}

inline std::vector<Detection> detect(const HeadOutput& head, const InferenceConfig& cfg, const GridConfig& grid) {
  return rotated_nms(extract_candidates(head, cfg, grid), cfg.nms_iou_threshold);
}

}  // namespace ohs
