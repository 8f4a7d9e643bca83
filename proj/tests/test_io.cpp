#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "ohs/io.hpp"
#include "ohs/synthetic.hpp"

using namespace ohs;

namespace {

const std::vector<std::string> kNames{"Car", "Pedestrian", "Cyclist"};

std::string f32le(std::initializer_list<float> values) {
  std::string out;
  for (float v : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
  return out;
}

}  // namespace

TEST(PointBin, EmptyAndSingleRecord) {
  EXPECT_TRUE(decode_point_bin("").empty());
  const auto pts = decode_point_bin(f32le({1.0f, 2.0f, 3.0f, 0.5f}));
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0], (Point3{1.0, 2.0, 3.0, 0.5}));
  EXPECT_EQ(encode_point_bin(pts), f32le({1.0f, 2.0f, 3.0f, 0.5f}));
}

TEST(PointBin, RoundTripIsBitIdentical) {
  std::mt19937_64 rng(71);
  std::normal_distribution<float> n(0.0f, 30.0f);
  std::vector<Point3> pts(10'000);
  for (auto& p : pts) p = {n(rng), n(rng), n(rng), std::abs(n(rng))};
  const std::string bytes = encode_point_bin(pts);
  ASSERT_EQ(bytes.size(), 160'000u);
  const auto back = decode_point_bin(bytes);
  EXPECT_EQ(back, pts);
  EXPECT_EQ(encode_point_bin(back), bytes);
}

TEST(PointBin, TruncatedFileIsPositionedError) {
  const std::string bytes = f32le({1, 2, 3, 4, 5, 6});
  try {
    decode_point_bin(bytes, "scan.bin");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.source(), "scan.bin");
    EXPECT_EQ(e.position(), 16u);
  }
}

TEST(Labels, SensorFrameRoundTrip) {
  std::mt19937_64 rng(72);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GroundTruth> gts;
  for (int k = 0; k < 50; ++k) {
    gts.push_back({static_cast<std::size_t>(k % 3),
                   {70 * u(rng), 80 * u(rng) - 40, u(rng) - 1, 0.5 + 4 * u(rng), 0.5 + 2 * u(rng), 1 + u(rng),
                    normalize_angle(7 * u(rng))},
                   static_cast<std::size_t>(rng() % 1000),
                   static_cast<int>(rng() % 3)});
  }
  EXPECT_EQ(parse_labels(format_labels(gts, kNames), LabelFrame::Sensor, kNames), gts);
  EXPECT_TRUE(parse_labels("", LabelFrame::Sensor, kNames).empty());
  EXPECT_TRUE(parse_labels("\n# only a comment\n", LabelFrame::Sensor, kNames).empty());
}

TEST(Labels, KittiCarWithZeroRotationFacesNegativeY) {
  const std::string line = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 0.00\n";
  const auto gts = parse_labels(line, LabelFrame::KittiCamera, kNames);
  ASSERT_EQ(gts.size(), 1u);
  const Box3D& b = gts[0].box;
  EXPECT_NEAR(b.yaw, -std::numbers::pi / 2, 1e-15);
  EXPECT_EQ(b.l, 3.64);
  EXPECT_EQ(b.w, 1.67);
  EXPECT_EQ(b.h, 1.65);
  // default extrinsics: x_velo = z_cam, y_velo = -x_cam, z_velo = -y_cam, then up by h / 2
  EXPECT_NEAR(b.cx, 46.70, 1e-12);
  EXPECT_NEAR(b.cy, 0.65, 1e-12);
  EXPECT_NEAR(b.cz, -1.71 + 0.825, 1e-12);
  EXPECT_EQ(gts[0].difficulty, 1);  // 26.79 px tall, unoccluded
}

TEST(Labels, DontCareIsSkippedAndMalformedLineIsPositioned) {
  const std::string text =
      "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n"
      "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 0.00\n";
  EXPECT_EQ(parse_labels(text, LabelFrame::KittiCamera, kNames).size(), 1u);
  try {
    parse_labels("Car 1 2 3 4 5 6 0\nCar 1 2 x 4 5 6 0\n", LabelFrame::Sensor, kNames, std::nullopt, "a.txt");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 2u);
  }
  EXPECT_THROW(parse_labels("Car 1 2 3\n", LabelFrame::Sensor, kNames), ParseError);
  EXPECT_THROW(parse_labels("Car 1 2 3 0 5 6 0\n", LabelFrame::Sensor, kNames), ParseError);
  EXPECT_THROW(parse_labels("Car 1 2 3 4 5 6 0 1.5\n", LabelFrame::Sensor, kNames), ParseError);
}

TEST(Labels, CalibrationInverseRecoversSensorPoint) {
  KittiCalib calib;
  const double c = std::cos(0.3), s = std::sin(0.3);
  calib.r0_rect = {c, -s, 0, s, c, 0, 0, 0, 1};
  calib.tr_velo_to_cam = {0, -1, 0, 0.1, 0, 0, -1, -0.2, 1, 0, 0, 0.3};
  const std::array<double, 3> v{12.0, -3.0, 0.5};
  std::array<double, 3> cam{};
  for (int i = 0; i < 3; ++i) {
    cam[i] = calib.tr_velo_to_cam[i * 4 + 0] * v[0] + calib.tr_velo_to_cam[i * 4 + 1] * v[1] +
             calib.tr_velo_to_cam[i * 4 + 2] * v[2] + calib.tr_velo_to_cam[i * 4 + 3];
  }
  std::array<double, 3> rect{};
  for (int i = 0; i < 3; ++i) {
    rect[i] = calib.r0_rect[i * 3 + 0] * cam[0] + calib.r0_rect[i * 3 + 1] * cam[1] + calib.r0_rect[i * 3 + 2] * cam[2];
  }
  const auto back = calib.cam_to_velo(rect);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(back[i], v[i], 1e-12);
}

TEST(Report, EmptyAndRoundTrip) {
  const Report empty{"detections", {}};
  EXPECT_EQ(parse_report(format_report(empty)), empty);
  Report r{"detections", {}};
  r.records.push_back(detection_to_json({1, 0.75, {1, 2, 3, 4, 5, 6, 0.1}, 7, 8}, "000001"));
  r.records.push_back(json{{"nested", {{"a", 1}, {"b", json::array({1.5, -2.25})}}}});
  EXPECT_EQ(parse_report(format_report(r), "detections"), r);
  const auto d = detection_from_json(r.records[0]);
  EXPECT_EQ(d, (Detection{1, 0.75, {1, 2, 3, 4, 5, 6, 0.1}, 7, 8}));
}

TEST(Report, SchemaErrors) {
  EXPECT_THROW(parse_report(""), ParseError);
  EXPECT_THROW(parse_report("{\"kind\":\"x\"}\n"), ParseError);
  EXPECT_THROW(parse_report("{\"schema\":\"ohs.report\",\"version\":2,\"kind\":\"x\"}\n"), ParseError);
  EXPECT_THROW(parse_report(format_report({"metrics", {}}), "detections"), ParseError);
  try {
    parse_report(format_report({"x", {}}) + "{not json\n", "", "r.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 2u);
  }
}

TEST(Report, LargeFileRereadMatchesRecordHashes) {
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  Report r{"detections", {}};
  std::vector<std::uint64_t> hashes;
  for (std::size_t k = 0; k < 100'000; ++k) {
    Detection d{k % 3, std::abs(u(rng)) / 100.0, {u(rng), u(rng), u(rng), 1 + std::abs(u(rng)), 1, 1, u(rng) / 50}, k, k};
    r.records.push_back(detection_to_json(d, scene_id(k / 100)));
    hashes.push_back(record_hash(r.records.back()));
  }
  const auto back = parse_report(format_report(r), "detections");
  ASSERT_EQ(back.records.size(), hashes.size());
  for (std::size_t k = 0; k < hashes.size(); ++k) ASSERT_EQ(record_hash(back.records[k]), hashes[k]) << k;
}

TEST(HeadFile, RoundTripInBothPrecisions) {
  const HeadLayout layout{3, RegressionSpecs::defaults(GridConfig{}), RelationEncoding::EightDir};
  HeadOutput head(layout, 4, 5);
  std::mt19937_64 rng(74);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : head.data) v = n(rng);
  const auto f64 = decode_head(encode_head(head, kNames));
  EXPECT_EQ(f64.head.layout, layout);
  EXPECT_EQ(f64.head.data, head.data);
  EXPECT_EQ(f64.class_names, kNames);
  const auto f32 = decode_head(encode_head(head, kNames, HeadDtype::F32));
  ASSERT_EQ(f32.head.data.size(), head.data.size());
  for (std::size_t k = 0; k < head.data.size(); ++k) {
    EXPECT_EQ(f32.head.data[k], static_cast<double>(static_cast<float>(head.data[k])));
  }
}

TEST(HeadFile, MalformedInputs) {
  const HeadLayout layout{1, RegressionSpecs{}, RelationEncoding::None};
  const std::string good = encode_head(HeadOutput(layout, 2, 2), {"Car"});
  EXPECT_THROW(decode_head("NOTAHEAD\n{}\n"), ParseError);
  EXPECT_THROW(decode_head(good.substr(0, good.size() - 3)), ParseError);
  EXPECT_THROW(decode_head(good + "x"), ParseError);
  std::string wrong_channels = good;
  wrong_channels.replace(wrong_channels.find("cls:Car"), 7, "cls:Van");
  EXPECT_THROW(decode_head(wrong_channels), ParseError);
  std::string huge = good;
  huge.replace(huge.find("\"rows\":2"), 8, "\"rows\":18446744073709551615");
  EXPECT_THROW(decode_head(huge), ParseError);
}

TEST(SynthScene, NoObjectsMeansClutterOnly) {
  SynthSpec spec;
  spec.num_objects = 0;
  spec.clutter_points = 300;
  spec.seed = 5;
  const auto s = synth_scene(spec);
  EXPECT_TRUE(s.gts.empty());
  EXPECT_EQ(s.points.size(), 300u);
  const GridConfig& g = spec.grid;
  for (const auto& p : s.points) {
    EXPECT_TRUE(p.x >= g.x.min && p.x < g.x.max && p.y >= g.y.min && p.y < g.y.max && p.z >= g.z.min && p.z < g.z.max);
  }
}

TEST(SynthScene, ExactPointCountsAndNoOverlap) {
  for (std::size_t n : {1u, 7u, 250u}) {
    SynthSpec spec;
    spec.num_objects = 12;
    spec.points_min = spec.points_max = n;
    spec.clutter_points = 500;
    spec.seed = 100 + n;
    const auto s = synth_scene(spec);
    ASSERT_EQ(s.gts.size(), 12u);
    EXPECT_EQ(s.points.size(), 12 * n + 500);
    for (std::size_t a = 0; a < s.gts.size(); ++a) {
      EXPECT_EQ(s.gts[a].num_points, n);
      EXPECT_TRUE(is_valid(s.gts[a].box));
      for (std::size_t b = a + 1; b < s.gts.size(); ++b) EXPECT_EQ(rotated_iou_bev(s.gts[a].box, s.gts[b].box), 0.0);
    }
  }
}

TEST(SynthScene, SeededCallsAreIdenticalAndSurviveThePointFormat) {
  SynthSpec spec;
  spec.seed = 77;
  const auto a = synth_scene(spec, "000003");
  const auto b = synth_scene(spec, "000003");
  EXPECT_EQ(a.points, b.points);
  EXPECT_EQ(a.gts, b.gts);
  EXPECT_EQ(decode_point_bin(encode_point_bin(a.points)), a.points);
  spec.seed = 78;
  EXPECT_NE(synth_scene(spec).points, a.points);
}

TEST(SynthScene, ImpossiblePlacementFails) {
  SynthSpec spec;
  spec.num_objects = 5000;
  spec.max_retries = 20;
  EXPECT_THROW(synth_scene(spec), Error);
  spec = SynthSpec{};
  spec.points_min = 10;
  spec.points_max = 5;
  EXPECT_THROW(synth_scene(spec), ConfigError);
}
