// SPDX-License-Identifier: Apache-2.0
//
// ohs: command-line front end for the hotspot detection pipeline.
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ohs/ohs.hpp"
#include "ohs/testing/checks.hpp"

namespace fs = std::filesystem;
using namespace ohs;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string output_dir = ".";
  std::vector<std::string> class_names;
  std::string encoding;
  std::string C;
  std::optional<std::size_t> downsample;
  std::string error_format = "text";

  std::string input;
  std::string heads;
  std::string detections;
  std::string label_frame = "sensor";
  std::string calib_dir;
  std::string dtype = "f32";
  std::string difficulty = "all";
  bool gt_as_detections = false;
  bool write_grads = false;
  double fraction = 1.0;
};

double default_threshold(const std::string& name) { return name == "Car" ? 0.7 : 0.5; }

RunConfig resolve_config(const Options& o) {
  RunConfig cfg = o.config.empty() ? config_from_json(json::object()) : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.class_names.empty()) {
    cfg.class_names = o.class_names;
    if (cfg.eval.iou_thresholds.size() != cfg.class_names.size()) {
      cfg.eval.iou_thresholds.clear();
      for (const auto& n : cfg.class_names) cfg.eval.iou_thresholds.push_back(default_threshold(n));
    }
    if (cfg.synth.class_mix.size() != cfg.class_names.size()) cfg.synth.class_mix.assign(cfg.class_names.size(), 1.0);
  }
  if (!o.encoding.empty()) cfg.encoding = relation_encoding_from_string(o.encoding);
  if (!o.C.empty()) {
    try {
      std::size_t used = 0;
      cfg.C = (o.C == "inf") ? std::numeric_limits<double>::infinity() : std::stod(o.C, &used);
      if (o.C != "inf" && used != o.C.size()) throw std::invalid_argument(o.C);
    } catch (const std::logic_error&) {
      throw ConfigError("--C: expected a number or inf, got '" + o.C + "'");
    }
  }
  if (o.downsample) cfg.grid.downsample = *o.downsample;
  cfg.validate();
  return cfg;
}

fs::path out_path(const Options& o, const std::string& name) { return fs::path(o.output_dir) / name; }

void write_resolved_config(const Options& o, const RunConfig& cfg) {
  detail::write_file(out_path(o, "resolved_config.json"), config_to_json(cfg).dump(2) + "\n");
}

std::vector<std::string> list_stems(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) stems.push_back(e.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

fs::path scenes_dir(const Options& o) { return o.input.empty() ? out_path(o, "scenes") : fs::path(o.input); }
fs::path heads_dir(const Options& o) { return o.heads.empty() ? out_path(o, "heads") : fs::path(o.heads); }

std::vector<GroundTruth> load_labels(const Options& o, const RunConfig& cfg, const std::string& stem) {
  const fs::path path = scenes_dir(o) / (stem + ".txt");
  if (o.label_frame == "sensor") return read_labels(path, LabelFrame::Sensor, cfg.class_names);
  std::optional<KittiCalib> calib;
  if (!o.calib_dir.empty()) calib = read_kitti_calib(fs::path(o.calib_dir) / (stem + ".txt"));
  return read_labels(path, LabelFrame::KittiCamera, cfg.class_names, calib);
}

std::uint64_t voxel_seed(const RunConfig& cfg, std::size_t index) {
  return ohs::detail::splitmix64(cfg.seed ^ ohs::detail::splitmix64(0x766f78656cULL + index));
}

struct SceneInput {
  std::vector<Point3> points;
  std::vector<GroundTruth> gts;
};

SceneInput load_scene(const Options& o, const RunConfig& cfg, const std::string& stem) {
  return {read_point_bin(scenes_dir(o) / (stem + ".bin")), load_labels(o, cfg, stem)};
}

AssignmentMap assign_scene(const RunConfig& cfg, const SceneInput& s, std::size_t index) {
  const auto occ = bev_occupancy(voxelize(s.points, cfg.grid, voxel_seed(cfg, index)), cfg.grid);
  return build_assignment(occ, s.gts, cfg.C, cfg.num_classes(), cfg.encoding, cfg.grid);
}

json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void write_records(const Options& o, const std::string& file, const std::string& kind,
                   const std::vector<std::vector<json>>& per_scene) {
  Report r{kind, {}};
  for (const auto& recs : per_scene) r.records.insert(r.records.end(), recs.begin(), recs.end());
  write_report(out_path(o, file), r);
}

int cmd_synth(const Options& o, const RunConfig& cfg) {
  const std::size_t n = cfg.synth.num_scenes;
  std::vector<std::vector<json>> recs(n);
  parallel_for(n, o.jobs, [&](std::size_t k) {
    const auto scene = synth_scene(cfg.synth_spec(k), scene_id(k));
    write_point_bin(out_path(o, "scenes/" + scene.id + ".bin"), scene.points);
    write_labels(out_path(o, "scenes/" + scene.id + ".txt"), scene.gts, cfg.class_names);
    json counts = json::array();
    for (const auto& g : scene.gts) counts.push_back(g.num_points);
    recs[k].push_back({{"scene", scene.id}, {"seed", scene.seed}, {"num_points", scene.points.size()},
                       {"num_objects", scene.gts.size()}, {"points_per_object", counts}});
  });
  write_records(o, "scenes.jsonl", "scenes", recs);
  std::cout << "synthesized " << n << " scenes\n";
  return 0;
}

int cmd_voxelize(const Options& o, const RunConfig& cfg) {
  const auto stems = list_stems(scenes_dir(o), ".bin");
  std::vector<std::vector<json>> recs(stems.size());
  parallel_for(stems.size(), o.jobs, [&](std::size_t k) {
    const auto pts = read_point_bin(scenes_dir(o) / (stems[k] + ".bin"));
    const auto grid = voxelize(pts, cfg.grid, voxel_seed(cfg, k));
    const auto occ = bev_occupancy(grid, cfg.grid);
    std::size_t kept = 0;
    for (const auto& v : grid.voxels) kept += v.count;
    json cells = json::array();
    for (std::size_t idx = 0; idx < occ.occupied.size(); ++idx) {
      if (occ.occupied[idx]) cells.push_back(idx);
    }
    recs[k].push_back({{"scene", stems[k]}, {"num_points", pts.size()}, {"num_voxels", grid.size()},
                       {"points_kept", kept}, {"rows", occ.rows}, {"cols", occ.cols},
                       {"num_occupied", cells.size()}, {"occupied", cells}});
  });
  write_records(o, "voxels.jsonl", "voxels", recs);
  std::cout << "voxelized " << stems.size() << " scenes\n";
  return 0;
}

int cmd_assign(const Options& o, const RunConfig& cfg) {
  const auto stems = list_stems(scenes_dir(o), ".bin");
  std::vector<std::vector<json>> recs(stems.size());
  std::vector<std::size_t> violations(stems.size(), 0);
  parallel_for(stems.size(), o.jobs, [&](std::size_t k) {
    const auto scene = load_scene(o, cfg, stems[k]);
    const auto map = assign_scene(cfg, scene, k);
    const auto per_object = map.hotspots_per_object();
    for (std::size_t g = 0; g < scene.gts.size(); ++g) {
      if (per_object[g] > map.max_per_object[g]) ++violations[k];
      recs[k].push_back({{"type", "object"}, {"scene", stems[k]}, {"object", g},
                         {"class", scene.gts[g].class_id}, {"num_points", scene.gts[g].num_points},
                         {"spots", map.spots_per_object[g]}, {"hotspots", per_object[g]},
                         {"max_hotspots", map.max_per_object[g]}});
    }
    for (const auto& h : map.hotspots) {
      json rec = hotspot_to_json(h);
      rec["type"] = "hotspot";
      rec["scene"] = stems[k];
      recs[k].push_back(std::move(rec));
    }
  });
  write_records(o, "assignments.jsonl", "assignments", recs);
  std::size_t bad = 0;
  for (auto v : violations) bad += v;
  if (bad > 0) throw Error(std::to_string(bad) + " objects exceed their hotspot budget");
  std::cout << "assigned hotspots for " << stems.size() << " scenes\n";
  return 0;
}

HeadDtype parse_dtype(const std::string& s) { return s == "f64" ? HeadDtype::F64 : HeadDtype::F32; }

int cmd_encode(const Options& o, const RunConfig& cfg) {
  const auto stems = list_stems(scenes_dir(o), ".bin");
  const HeadLayout layout = cfg.head_layout();
  std::vector<std::vector<json>> recs(stems.size());
  parallel_for(stems.size(), o.jobs, [&](std::size_t k) {
    const auto scene = load_scene(o, cfg, stems[k]);
    const auto map = assign_scene(cfg, scene, k);
    const HeadOutput head = render_target_head(map, scene.gts, layout, cfg.grid);
    write_head(heads_dir(o) / (stems[k] + ".ohsh"), head, cfg.class_names, parse_dtype(o.dtype));
    for (const auto& h : map.hotspots) {
      json rec = hotspot_to_json(h);
      rec["scene"] = stems[k];
      recs[k].push_back(std::move(rec));
    }
  });
  write_records(o, "targets.jsonl", "targets", recs);
  std::cout << "encoded " << stems.size() << " target heads\n";
  return 0;
}

HeadOutput load_head(const fs::path& path, const RunConfig& cfg) {
  auto f = read_head(path);
  if (f.head.layout != cfg.head_layout()) throw Error(path.string() + ": head layout differs from the config");
  if (f.head.rows != cfg.grid.out_rows() || f.head.cols != cfg.grid.out_cols()) {
    throw Error(path.string() + ": head dimensions differ from the output grid");
  }
  return std::move(f.head);
}

int cmd_losses(const Options& o, const RunConfig& cfg) {
  const auto stems = list_stems(scenes_dir(o), ".bin");
  std::vector<std::vector<json>> recs(stems.size());
  std::vector<double> totals(stems.size());
  parallel_for(stems.size(), o.jobs, [&](std::size_t k) {
    const auto scene = load_scene(o, cfg, stems[k]);
    const auto map = assign_scene(cfg, scene, k);
    const HeadOutput head = load_head(heads_dir(o) / (stems[k] + ".ohsh"), cfg);
    const auto loss = composite_loss(head, map, cfg.focal, cfg.weights);
    double sq = 0.0, max_abs = 0.0;
    for (double g : loss.grad.data) {
      sq += g * g;
      max_abs = std::max(max_abs, std::abs(g));
    }
    if (o.write_grads) {
      write_head(out_path(o, "grads/" + stems[k] + ".ohsh"), loss.grad, cfg.class_names, HeadDtype::F64);
    }
    totals[k] = loss.total;
    recs[k].push_back({{"scene", stems[k]}, {"cls", loss.cls}, {"loc", loss.loc}, {"rel", loss.rel},
                       {"total", loss.total}, {"grad_l2", std::sqrt(sq)}, {"grad_max_abs", max_abs},
                       {"hotspots", map.count(CellState::Hotspot)}, {"ignored", map.count(CellState::Ignored)}});
  });
  write_records(o, "losses.jsonl", "losses", recs);
  double mean = 0.0;
  for (double t : totals) mean += t;
  if (!totals.empty()) mean /= static_cast<double>(totals.size());
  std::cout << "losses for " << stems.size() << " scenes, mean total " << mean << "\n";
  return 0;
}

int cmd_detect(const Options& o, const RunConfig& cfg) {
  const auto stems = list_stems(heads_dir(o), ".ohsh");
  std::vector<std::vector<json>> recs(stems.size());
  parallel_for(stems.size(), o.jobs, [&](std::size_t k) {
    const HeadOutput head = load_head(heads_dir(o) / (stems[k] + ".ohsh"), cfg);
    for (const auto& d : detect(head, cfg.inference, cfg.grid)) recs[k].push_back(detection_to_json(d, stems[k]));
  });
  write_records(o, "detections.jsonl", "detections", recs);
  std::size_t n = 0;
  for (const auto& r : recs) n += r.size();
  std::cout << n << " detections from " << stems.size() << " heads\n";
  return 0;
}

Difficulty parse_difficulty(const std::string& s) {
  if (s == "easy") return Difficulty::Easy;
  if (s == "moderate") return Difficulty::Moderate;
  if (s == "hard") return Difficulty::Hard;
  return Difficulty::All;
}

int cmd_eval(const Options& o, const RunConfig& cfg) {
  const auto stems = list_stems(scenes_dir(o), ".txt");
  std::vector<SceneResult> scenes(stems.size());
  parallel_for(stems.size(), o.jobs, [&](std::size_t k) { scenes[k].gts = load_labels(o, cfg, stems[k]); });
  if (o.gt_as_detections) {
    for (auto& s : scenes) {
      for (const auto& g : s.gts) s.dets.push_back({g.class_id, 1.0, g.box, 0, 0});
    }
  } else {
    const fs::path path = o.detections.empty() ? out_path(o, "detections.jsonl") : fs::path(o.detections);
    const Report r = read_report(path, "detections");
    std::map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < stems.size(); ++k) index[stems[k]] = k;
    for (std::size_t n = 0; n < r.records.size(); ++n) {
      const auto& rec = r.records[n];
      Detection d;
      std::string scene;
      try {
        scene = rec.at("scene").get<std::string>();
        d = detection_from_json(rec);
      } catch (const std::exception& e) {
        throw ParseError(path.string(), n + 2, std::string("bad detection record: ") + e.what());
      }
      auto it = index.find(scene);
      if (it == index.end()) throw ParseError(path.string(), n + 2, "detection for unknown scene " + scene);
      if (d.class_id >= cfg.class_names.size()) throw ParseError(path.string(), n + 2, "class id out of range");
      scenes[it->second].dets.push_back(d);
    }
  }
  const Difficulty diff = parse_difficulty(o.difficulty);
  const auto rep = evaluate(scenes, cfg.class_names.size(), cfg.eval, diff);
  const auto buckets = default_point_buckets();
  const auto recall = recall_by_points(rep.outcomes, buckets);

  std::vector<json> recs;
  std::cout << "class        AP40     gt    det     tp\n";
  for (const auto& m : rep.classes) {
    recs.push_back({{"type", "ap"}, {"class", cfg.class_names[m.class_id]}, {"difficulty", to_string(diff)},
                    {"mode", to_string(m.mode)}, {"iou_threshold", cfg.eval.threshold(m.class_id)},
                    {"ap40", nullable(m.ap)}, {"num_gt", m.num_gt}, {"num_det", m.num_det}, {"num_tp", m.num_tp}});
    char line[128];
    std::snprintf(line, sizeof(line), "%-10s %6s %6zu %6zu %6zu\n", cfg.class_names[m.class_id].c_str(),
                  m.ap ? std::to_string(*m.ap).substr(0, 6).c_str() : "n/a", m.num_gt, m.num_det, m.num_tp);
    std::cout << line;
  }
  std::cout << "points     recall     gt\n";
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    std::size_t count = 0;
    for (const auto& g : rep.outcomes) count += buckets[b].contains(g.num_points) ? 1 : 0;
    recs.push_back({{"type", "recall"}, {"bucket", buckets[b].name()}, {"recall", nullable(recall[b])},
                    {"num_gt", count}});
    char line[128];
    std::snprintf(line, sizeof(line), "%-10s %6s %6zu\n", buckets[b].name().c_str(),
                  recall[b] ? std::to_string(*recall[b]).substr(0, 6).c_str() : "n/a", count);
    std::cout << line;
  }
  write_records(o, "metrics.jsonl", "metrics", {recs});
  return 0;
}

int cmd_oracle_check(const Options& o, const RunConfig& cfg) {
  const auto checks = ohs::testing::oracle_suites(cfg.seed, o.fraction);
  std::vector<ohs::testing::CheckOutcome> outcomes(checks.size());
  parallel_for(checks.size(), o.jobs, [&](std::size_t k) { outcomes[k] = ohs::testing::run_check(checks[k]); });
  std::vector<json> recs;
  bool ok = true;
  for (const auto& r : outcomes) {
    ok = ok && r.passed;
    json rec{{"check", r.name}, {"passed", r.passed}};
    if (!r.passed) rec["detail"] = r.detail;
    recs.push_back(std::move(rec));
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name;
    if (!r.passed) std::cout << ": " << r.detail;
    std::cout << "\n";
  }
  write_records(o, "oracle_check.jsonl", "oracle-check", {recs});
  return ok ? 0 : 1;
}

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  if (dynamic_cast<const Error*>(&e)) return "error";
  return "internal";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-as-hotspots detection pipeline tools"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Override the config seed");
  app.add_option("--jobs", o.jobs, "Worker threads for scene-level parallelism")->check(CLI::PositiveNumber);
  app.add_option("--output-dir", o.output_dir, "Directory for outputs and the resolved config");
  app.add_option("--class-names", o.class_names, "Comma-separated class names")->delimiter(',');
  app.add_option("--encoding", o.encoding, "Spatial relation encoding")
      ->check(CLI::IsMember({"none", "lr", "fb", "quadrant", "8dir", "deviation"}));
  app.add_option("--C", o.C, "Hotspot budget constant (number or inf)");
  app.add_option("--downsample", o.downsample, "BEV output stride in voxels")->check(CLI::PositiveNumber);
  app.add_option("--error-format", o.error_format, "Error report format on stderr")
      ->check(CLI::IsMember({"text", "json"}));

  auto add_scenes = [&](CLI::App* sub) {
    sub->add_option("--input", o.input, "Scene directory with <id>.bin and <id>.txt (default <output-dir>/scenes)");
    sub->add_option("--label-frame", o.label_frame, "Label coordinate frame")
        ->check(CLI::IsMember({"sensor", "kitti"}));
    sub->add_option("--calib-dir", o.calib_dir, "KITTI calibration directory for kitti labels");
  };
  auto* synth = app.add_subcommand("synth", "Generate seeded synthetic scenes");
  auto* voxel = app.add_subcommand("voxelize", "Voxelize scenes and report BEV occupancy");
  add_scenes(voxel);
  auto* assign = app.add_subcommand("assign", "Assign hotspots and report per-object counts");
  add_scenes(assign);
  auto* encode = app.add_subcommand("encode", "Render ground truth into target head files");
  add_scenes(encode);
  encode->add_option("--heads", o.heads, "Head output directory (default <output-dir>/heads)");
  encode->add_option("--dtype", o.dtype, "Head value type")->check(CLI::IsMember({"f32", "f64"}));
  auto* losses = app.add_subcommand("losses", "Compute losses and gradients for head files");
  add_scenes(losses);
  losses->add_option("--heads", o.heads, "Head directory (default <output-dir>/heads)");
  losses->add_flag("--write-grads", o.write_grads, "Also write gradient tensors to <output-dir>/grads");
  auto* det = app.add_subcommand("detect", "Decode head files into detections");
  det->add_option("--heads", o.heads, "Head directory (default <output-dir>/heads)");
  auto* ev = app.add_subcommand("eval", "AP40 and recall-by-points against labels");
  add_scenes(ev);
  ev->add_option("--detections", o.detections, "Detections report (default <output-dir>/detections.jsonl)");
  ev->add_option("--difficulty", o.difficulty, "Difficulty filter")
      ->check(CLI::IsMember({"easy", "moderate", "hard", "all"}));
  ev->add_flag("--gt-as-detections", o.gt_as_detections, "Evaluate the labels against themselves");
  auto* oracle = app.add_subcommand("oracle-check", "Run every oracle-backed check suite");
  oracle->add_option("--fraction", o.fraction, "Scale of the randomized instance counts")
      ->check(CLI::Range(1e-6, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const RunConfig cfg = resolve_config(o);
    fs::create_directories(o.output_dir);
    write_resolved_config(o, cfg);
    if (*synth) return cmd_synth(o, cfg);
    if (*voxel) return cmd_voxelize(o, cfg);
    if (*assign) return cmd_assign(o, cfg);
    if (*encode) return cmd_encode(o, cfg);
    if (*losses) return cmd_losses(o, cfg);
    if (*det) return cmd_detect(o, cfg);
    if (*ev) return cmd_eval(o, cfg);
    if (*oracle) return cmd_oracle_check(o, cfg);
  } catch (const std::exception& e) {
    if (o.error_format == "json") {
      std::cerr << json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << "\n";
    } else {
      std::cerr << "error: " << e.what() << "\n";
    }
    return 1;
  }
  return 1;
}
