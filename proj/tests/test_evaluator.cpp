#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "ohs/evaluator.hpp"
#include "ohs/testing/checks.hpp"

using namespace ohs;

namespace {

Detection det(double score, Box3D b, std::size_t cls = 0) { return {cls, score, b, 0, 0}; }

GroundTruth gt(Box3D b, std::size_t cls = 0, std::size_t pts = 20, int difficulty = 0) {
  return {cls, b, pts, difficulty};
}

const Box3D kA{0, 0, 0, 4, 2, 1.5, 0};
const Box3D kB{10, 0, 0, 4, 2, 1.5, 0.5};

}  // namespace

TEST(Match, ExactDetectionIsTruePositive) {
  const std::vector<Detection> dets{det(0.9, kA)};
  const std::vector<Box3D> gts{kA};
  const auto r = match(dets, gts, 0.7, IouMode::ThreeD);
  EXPECT_TRUE(r.is_tp(0));
  EXPECT_EQ(r.gt_to_det[0], 0);
}

TEST(Match, DuplicateDetectionIsFalsePositive) {
  const std::vector<Detection> dets{det(0.5, kA), det(0.9, kA)};
  const std::vector<Box3D> gts{kA};
  const auto r = match(dets, gts, 0.7, IouMode::Bev);
  EXPECT_TRUE(r.is_tp(1));
  EXPECT_FALSE(r.is_tp(0));
}

TEST(Match, PermutationInvariant) {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<Box3D> gts;
    for (int k = 0; k < 3; ++k) gts.push_back({3 * u(rng), 3 * u(rng), 0, 1 + u(rng), 1 + u(rng), 1, 0});
    std::vector<Detection> dets;
    for (int k = 0; k < 5; ++k) {
      const Box3D& g = gts[rng() % 3];
      dets.push_back({0, std::round(u(rng) * 3) / 3, {g.cx + 0.2 * u(rng), g.cy, 0, g.l, g.w, 1, 0}, rng() % 3, 0});
    }
    const auto r = match(dets, gts, 0.5, IouMode::Bev);
    std::vector<std::size_t> perm(dets.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Detection> shuffled;
    for (auto p : perm) shuffled.push_back(dets[p]);
    const auto s = match(shuffled, gts, 0.5, IouMode::Bev);
    // identical detections may trade places, so compare (detection, GT) pairs as multisets
    auto pairs = [](const std::vector<Detection>& d, const MatchResult& m) {
      std::vector<std::pair<Detection, int>> out;
      for (std::size_t k = 0; k < d.size(); ++k) out.emplace_back(d[k], m.det_to_gt[k]);
      std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (detection_before(a.first, b.first)) return true;
        if (detection_before(b.first, a.first)) return false;
        return a.second < b.second;
      });
      return out;
    };
    EXPECT_EQ(pairs(dets, r), pairs(shuffled, s));
  }
}

TEST(Ap40, Examples) {
  const std::vector<ScoredMatch> perfect{{0.9, true}, {0.8, true}};
  EXPECT_EQ(ap40(perfect, 2), 1.0);
  const std::vector<ScoredMatch> none{{0.9, false}};
  EXPECT_EQ(ap40(none, 2), 0.0);
  const std::vector<ScoredMatch> example{{0.9, true}, {0.8, false}, {0.7, true}};
  EXPECT_NEAR(*ap40(example, 2), 5.0 / 6.0, 1e-15);
  EXPECT_FALSE(ap40(example, 0).has_value());
  EXPECT_EQ(ap40({}, 3), 0.0);
}

TEST(Ap40, DeletingAFalsePositiveNeverLowersAp) {
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    std::vector<ScoredMatch> m;
    const std::size_t n = 1 + rng() % 20;
    for (std::size_t i = 0; i < n; ++i) m.push_back({u(rng), u(rng) < 0.5});
    const std::size_t num_gt = 1 + rng() % 12;
    const double base = *ap40(m, num_gt);
    for (std::size_t i = 0; i < n; ++i) {
      if (m[i].tp) continue;
      auto fewer = m;
      fewer.erase(fewer.begin() + static_cast<std::ptrdiff_t>(i));
      EXPECT_GE(*ap40(fewer, num_gt), base - 1e-15);
    }
  }
}

TEST(Ap40, MatchesExhaustiveOracle) { EXPECT_NO_THROW(ohs::testing::check_evaluator(63, 100)); }

TEST(Evaluate, IdentityExperimentGivesPerfectAp) {
  std::vector<SceneResult> scenes(2);
  scenes[0].gts = {gt(kA, 0), gt(kB, 1)};
  scenes[1].gts = {gt(kB, 0), gt(kA, 2)};
  for (auto& s : scenes) {
    for (const auto& g : s.gts) s.dets.push_back(det(0.9, g.box, g.class_id));
  }
  for (auto mode : {IouMode::Bev, IouMode::ThreeD}) {
    EvalConfig cfg;
    cfg.mode = mode;
    const auto rep = evaluate(scenes, 3, cfg);
    ASSERT_EQ(rep.classes.size(), 3u);
    for (const auto& m : rep.classes) EXPECT_EQ(m.ap, 1.0);
  }
}

TEST(Evaluate, ClassWithoutGroundTruthHasNoAp) {
  std::vector<SceneResult> scenes(1);
  scenes[0].gts = {gt(kA, 0)};
  scenes[0].dets = {det(0.9, kA, 0), det(0.8, kB, 1)};
  const auto rep = evaluate(scenes, 2, EvalConfig{{0.7, 0.5}, IouMode::ThreeD});
  EXPECT_EQ(rep.classes[0].ap, 1.0);
  EXPECT_FALSE(rep.classes[1].ap.has_value());
  EXPECT_EQ(rep.classes[1].num_det, 1u);
}

TEST(Evaluate, DifficultyFilterIgnoresHarderObjects) {
  std::vector<SceneResult> scenes(1);
  scenes[0].gts = {gt(kA, 0, 20, 0), gt(kB, 0, 20, 2)};
  scenes[0].dets = {det(0.9, kA), det(0.8, kB)};
  const auto easy = evaluate(scenes, 1, EvalConfig{{0.7}, IouMode::Bev}, Difficulty::Easy);
  EXPECT_EQ(easy.classes[0].num_gt, 1u);
  EXPECT_EQ(easy.classes[0].num_det, 1u);  // the match on the hard object is dropped
  EXPECT_EQ(easy.classes[0].ap, 1.0);
  const auto all = evaluate(scenes, 1, EvalConfig{{0.7}, IouMode::Bev}, Difficulty::All);
  EXPECT_EQ(all.classes[0].num_gt, 2u);
}

TEST(Evaluate, ThreeDimensionalThresholdUsesHeight) {
  std::vector<SceneResult> scenes(1);
  scenes[0].gts = {gt(kA)};
  Box3D lifted = kA;
  lifted.cz += 0.6;  // BEV identical, height overlap 0.9 / 1.5
  scenes[0].dets = {det(0.9, lifted)};
  EXPECT_EQ(evaluate(scenes, 1, EvalConfig{{0.7}, IouMode::Bev}).classes[0].ap, 1.0);
  EXPECT_EQ(evaluate(scenes, 1, EvalConfig{{0.7}, IouMode::ThreeD}).classes[0].ap, 0.0);
}

TEST(Evaluate, RejectsBadThresholds) {
  std::vector<SceneResult> scenes(1);
  EXPECT_THROW(evaluate(scenes, 1, EvalConfig{{0.0}, IouMode::Bev}), ConfigError);
  EXPECT_THROW(evaluate(scenes, 2, EvalConfig{{0.5}, IouMode::Bev}), DomainError);
}

TEST(RecallBuckets, Names) {
  const auto b = default_point_buckets();
  ASSERT_EQ(b.size(), 4u);
  EXPECT_EQ(b[0].name(), "1-10");
  EXPECT_EQ(b[1].name(), "11-50");
  EXPECT_EQ(b[2].name(), "51-200");
  EXPECT_EQ(b[3].name(), "200+");
  EXPECT_TRUE(b[3].contains(201));
  EXPECT_FALSE(b[3].contains(200));
  EXPECT_FALSE(b[0].contains(0));
}

TEST(RecallBuckets, Examples) {
  const auto buckets = default_point_buckets();
  std::vector<GtOutcome> all_hit{{5, true}, {30, true}, {70, true}};
  const auto r = recall_by_points(all_hit, buckets);
  EXPECT_EQ(r[0], 1.0);
  EXPECT_EQ(r[1], 1.0);
  EXPECT_EQ(r[2], 1.0);
  EXPECT_FALSE(r[3].has_value());

  std::vector<GtOutcome> dense_only;
  for (std::size_t n : {3, 8, 20, 45, 99, 100, 150, 400}) dense_only.push_back({n, n >= 100});
  const auto d = recall_by_points(dense_only, buckets);
  EXPECT_EQ(d[0], 0.0);
  EXPECT_EQ(d[1], 0.0);
  EXPECT_EQ(d[2], 2.0 / 3.0);
  EXPECT_EQ(d[3], 1.0);
}

TEST(RecallBuckets, MatchesCountingOracle) {
  std::mt19937_64 rng(64);
  for (int t = 0; t < 200; ++t) {
    std::vector<GtOutcome> o;
    const std::size_t n = rng() % 100;
    for (std::size_t i = 0; i < n; ++i) o.push_back({rng() % 400, (rng() & 1) != 0});
    EXPECT_EQ(recall_by_points(o, default_point_buckets()), ohs::testing::counting_recall(o));
  }
}
