#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "ohs/inference.hpp"
#include "ohs/testing/checks.hpp"

using namespace ohs;

namespace {

const HeadLayout kRaw{2, RegressionSpecs{}, RelationEncoding::None};

HeadOutput empty_head(const GridConfig& g) { return HeadOutput(kRaw, g.out_rows(), g.out_cols()); }

Detection det(std::size_t cls, double score, Box3D b, std::size_t row = 0, std::size_t col = 0) {
  return {cls, score, b, row, col};
}

}  // namespace

TEST(Candidates, BelowThresholdIsEmpty) {
  const GridConfig g = ohs::testing::small_grid();
  HeadOutput head = empty_head(g);
  for (std::size_t idx = 0; idx < g.out_rows() * g.out_cols(); ++idx) head.cell(idx)[0] = 0.29;
  EXPECT_TRUE(detect(head, InferenceConfig::kitti(), g).empty());
}

TEST(Candidates, OneFiringCellDecodesItsBox) {
  const GridConfig g = ohs::testing::small_grid();
  HeadOutput head = empty_head(g);
  const Vec2 c = cell_center(3, 4, g);
  const Box3D b{c.x + 0.3, c.y - 0.2, -1.0, 2.0, 1.0, 1.5, 0.4};
  auto cell = head.cell(3, 4);
  cell[1] = 0.8;
  write_targets(cell, kRaw, encode_box(b, c), LogitEncoding::Saturated);
  const auto dets = detect(head, InferenceConfig::kitti(), g);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].class_id, 1u);
  EXPECT_EQ(dets[0].score, 0.8);
  EXPECT_EQ(dets[0].row, 3u);
  EXPECT_EQ(dets[0].col, 4u);
  EXPECT_NEAR(dets[0].box.cx, b.cx, 1e-12);
  EXPECT_NEAR(dets[0].box.yaw, b.yaw, 1e-12);
}

TEST(Candidates, TopKMatchesFullSortWithTies) {
  const GridConfig g = ohs::testing::small_grid();
  HeadOutput head = empty_head(g);
  std::mt19937_64 rng(51);
  // 300 firing cells with only a handful of distinct scores
  std::vector<std::size_t> cells(g.out_rows() * g.out_cols());
  std::iota(cells.begin(), cells.end(), 0);
  std::shuffle(cells.begin(), cells.end(), rng);
  for (std::size_t n = 0; n < 300; ++n) head.cell(cells[n])[rng() % 2] = 0.3 + 0.1 * static_cast<double>(rng() % 6);
  const auto cands = extract_candidates(head, InferenceConfig::kitti(), g);
  const auto ref = ohs::testing::full_sort_top_k(head, 0.3, 100);
  ASSERT_EQ(cands.size(), 100u);
  for (std::size_t k = 0; k < 100; ++k) {
    EXPECT_EQ(cands[k].score, std::get<0>(ref[k]));
    EXPECT_EQ(cands[k].row, std::get<1>(ref[k]));
    EXPECT_EQ(cands[k].col, std::get<2>(ref[k]));
  }
}

TEST(Candidates, LoweringThresholdKeepsEarlierCandidates) {
  const GridConfig g = ohs::testing::small_grid();
  std::mt19937_64 rng(52);
  HeadOutput head = ohs::testing::detail::random_head(rng, kRaw, g.out_rows(), g.out_cols());
  InferenceConfig hi{0.7, 100000, 0.01}, lo{0.4, 100000, 0.01};
  const auto a = extract_candidates(head, hi, g);
  const auto b = extract_candidates(head, lo, g);
  for (const auto& d : a) EXPECT_NE(std::find(b.begin(), b.end(), d), b.end());
}

TEST(Candidates, RejectsMismatchedGrid) {
  const GridConfig g = ohs::testing::small_grid();
  HeadOutput head(kRaw, 3, 3);
  EXPECT_THROW(detect(head, InferenceConfig::kitti(), g), DomainError);
  EXPECT_THROW((InferenceConfig{1.5, 100, 0.01}.validate()), ConfigError);
  EXPECT_THROW((InferenceConfig{0.3, 0, 0.01}.validate()), ConfigError);
}

TEST(Nms, SingleAndDuplicate) {
  const Box3D b{0, 0, 0, 4, 2, 1.5, 0.3};
  EXPECT_EQ(rotated_nms({det(0, 0.5, b)}, 0.01).size(), 1u);
  const auto kept = rotated_nms({det(0, 0.8, b, 1, 1), det(0, 0.9, b, 2, 2)}, 0.01);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].score, 0.9);
  // different classes never suppress each other
  EXPECT_EQ(rotated_nms({det(0, 0.8, b), det(1, 0.9, b)}, 0.01).size(), 2u);
}

TEST(Nms, MatchesReferenceAndIsPermutationInvariant) {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<Detection> dets;
    const std::size_t n = 1 + rng() % 64;
    for (std::size_t i = 0; i < n; ++i) {
      dets.push_back(det(rng() % 2, std::round(u(rng) * 10.0) / 10.0,
                         {8 * u(rng), 8 * u(rng), 0, 0.5 + 3 * u(rng), 0.5 + 2 * u(rng), 1, 6.28 * u(rng)},
                         rng() % 8, rng() % 8));
    }
    const double thr = t % 2 ? 0.01 : 0.3 * u(rng);
    const auto kept = rotated_nms(dets, thr);
    ASSERT_EQ(kept, ohs::testing::reference_nms(dets, thr));
    for (std::size_t i = 0; i < kept.size(); ++i) {
      for (std::size_t j = i + 1; j < kept.size(); ++j) {
        if (kept[i].class_id == kept[j].class_id) {
          EXPECT_LE(rotated_iou_bev(kept[i].box, kept[j].box), thr);
        }
      }
    }
    std::shuffle(dets.begin(), dets.end(), rng);
    ASSERT_EQ(rotated_nms(dets, thr), kept);
  }
}

TEST(InferenceConfig, Profiles) {
  EXPECT_EQ(InferenceConfig::kitti().score_threshold, 0.3);
  EXPECT_EQ(InferenceConfig::kitti().pre_nms_top_k, 100u);
  EXPECT_EQ(InferenceConfig::kitti().nms_iou_threshold, 0.01);
  EXPECT_EQ(InferenceConfig::nuscenes().score_threshold, 0.1);
  EXPECT_EQ(InferenceConfig::nuscenes().pre_nms_top_k, 80u);
  EXPECT_EQ(InferenceConfig::nuscenes().nms_iou_threshold, 0.02);
}

TEST(InferenceOracles, OccupancyTopKAndNms) { EXPECT_NO_THROW(ohs::testing::check_inference_oracles(54, 30)); }
