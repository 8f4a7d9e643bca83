#include <gtest/gtest.h>

#include <json.hpp>

#include "cli_harness.hpp"
#include "ohs/config.hpp"
#include "ohs/io.hpp"

namespace fs = std::filesystem;
using namespace cli_harness;
using ohs::json;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = scratch(::testing::UnitTest::GetInstance()->current_test_info()->name());
    config_ = dir_ / "config.json";
    std::ofstream(config_) << kSmallConfig;
  }
  void TearDown() override { fs::remove_all(dir_); }

  int cli(std::vector<std::string> args) {
    args.insert(args.end(), {"--config", config_.string(), "--output-dir", (dir_ / "out").string()});
    return run(args, dir_ / "stdout.txt", dir_ / "stderr.txt");
  }
  std::string err() const { return slurp(dir_ / "stderr.txt"); }
  ohs::Report report(const std::string& name) const { return ohs::read_report(dir_ / "out" / name); }

  fs::path dir_;
  fs::path config_;
};

}  // namespace

TEST_F(Cli, WritesTheResolvedConfigWithFlagOverrides) {
  ASSERT_EQ(cli({"synth", "--seed", "5", "--encoding", "8dir", "--C", "inf", "--downsample", "2"}), 0) << err();
  const auto resolved = json::parse(slurp(dir_ / "out" / "resolved_config.json"));
  EXPECT_EQ(resolved["seed"], 5);
  EXPECT_EQ(resolved["encoding"], "8dir");
  EXPECT_EQ(resolved["C"], "inf");
  EXPECT_EQ(resolved["grid"]["downsample"], 2);
  EXPECT_EQ(resolved["grid"]["x_range"], json::array({0.0, 32.0}));
  // the echoed config loads back to the same run configuration
  EXPECT_EQ(ohs::config_to_json(ohs::config_from_json(resolved)), resolved);
  EXPECT_EQ(report("scenes.jsonl").records.size(), 12u);
}

TEST_F(Cli, ClassNamesFlagResizesDerivedLists) {
  ASSERT_EQ(cli({"synth", "--class-names", "Car,Van"}), 0) << err();
  const auto resolved = json::parse(slurp(dir_ / "out" / "resolved_config.json"));
  EXPECT_EQ(resolved["class_names"], json::array({"Car", "Van"}));
  EXPECT_EQ(resolved["eval"]["iou_thresholds"], json::array({0.7, 0.5}));
}

TEST_F(Cli, ValidationFailuresExitNonzero) {
  std::ofstream(config_) << R"({"grid": {"voxel": 0.1}})";
  EXPECT_NE(cli({"synth"}), 0);
  EXPECT_NE(err().find("unknown key"), std::string::npos);
  std::ofstream(config_) << R"({"C": -1})";
  EXPECT_NE(cli({"synth"}), 0);
  std::ofstream(config_) << "{not json";
  EXPECT_NE(cli({"synth"}), 0);
  std::ofstream(config_) << kSmallConfig;
  EXPECT_NE(cli({"synth", "--C", "many"}), 0);
  EXPECT_NE(cli({"synth", "--encoding", "hexadecant"}), 0);
  EXPECT_NE(cli({"synth", "--downsample", "3"}), 0);
  EXPECT_NE(cli({"synth", "--jobs", "0"}), 0);
  EXPECT_NE(cli({"frobnicate"}), 0);
  EXPECT_NE(cli({}), 0);
  EXPECT_NE(cli({"detect", "--heads", (dir_ / "missing").string()}), 0);
}

TEST_F(Cli, MachineReadableErrors) {
  EXPECT_NE(cli({"synth", "--C", "-4", "--error-format", "json"}), 0);
  const auto e = json::parse(err());
  EXPECT_EQ(e["error"], "config");
  EXPECT_TRUE(e["message"].is_string());
}

TEST_F(Cli, AssignRespectsTheHotspotBudget) {
  ASSERT_EQ(cli({"synth"}), 0) << err();
  ASSERT_EQ(cli({"assign"}), 0) << err();
  std::size_t objects = 0;
  for (const auto& r : report("assignments.jsonl").records) {
    if (r["type"] != "object") continue;
    ++objects;
    EXPECT_LE(r["hotspots"].get<std::size_t>(), r["max_hotspots"].get<std::size_t>());
    EXPECT_LE(r["hotspots"].get<std::size_t>(), r["spots"].get<std::size_t>());
    EXPECT_GE(r["max_hotspots"].get<std::size_t>(), 1u);
  }
  EXPECT_EQ(objects, 12u * 6u);
}

TEST_F(Cli, GroundTruthDetectionsScorePerfectAp) {
  ASSERT_EQ(cli({"synth"}), 0) << err();
  ASSERT_EQ(cli({"eval", "--gt-as-detections"}), 0) << err();
  for (const auto& r : report("metrics.jsonl").records) {
    if (r["type"] == "ap") {
      EXPECT_EQ(r["ap40"], 1.0) << r.dump();
    }
  }
}

TEST_F(Cli, EncodedTargetsSurviveDetectAndEval) {
  ASSERT_EQ(cli({"synth"}), 0) << err();
  ASSERT_EQ(cli({"encode"}), 0) << err();
  ASSERT_EQ(cli({"detect"}), 0) << err();
  ASSERT_EQ(cli({"eval"}), 0) << err();
  std::size_t classes = 0;
  for (const auto& r : report("metrics.jsonl").records) {
    if (r["type"] != "ap") continue;
    ++classes;
    EXPECT_EQ(r["ap40"], 1.0) << r.dump();
  }
  EXPECT_EQ(classes, 3u);
  ASSERT_EQ(cli({"losses"}), 0) << err();
  for (const auto& r : report("losses.jsonl").records) {
    EXPECT_LT(r["loc"].get<double>(), 1e-6);
    EXPECT_TRUE(r["total"].is_number());
  }
}

TEST_F(Cli, EvalRejectsDetectionsForUnknownScenes) {
  ASSERT_EQ(cli({"synth"}), 0) << err();
  ohs::Report r{"detections", {ohs::detection_to_json({0, 0.9, {1, 1, 0, 4, 2, 1.5, 0}, 0, 0}, "999999")}};
  ohs::write_report(dir_ / "dets.jsonl", r);
  EXPECT_NE(cli({"eval", "--detections", (dir_ / "dets.jsonl").string()}), 0);
  EXPECT_NE(err().find("unknown scene"), std::string::npos);
}

TEST_F(Cli, HeadLayoutMustMatchTheConfig) {
  ASSERT_EQ(cli({"synth"}), 0) << err();
  ASSERT_EQ(cli({"encode", "--encoding", "lr"}), 0) << err();
  EXPECT_NE(cli({"detect", "--encoding", "quadrant"}), 0);
  EXPECT_NE(err().find("layout"), std::string::npos);
}
