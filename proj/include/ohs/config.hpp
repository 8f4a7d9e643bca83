// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: one JSON document, every section optional, unknown keys
// rejected. Defaults reproduce the KITTI setup.
#pragma once

#include <cmath>
#include <filesystem>
#include <initializer_list>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "ohs/assignment.hpp"
#include "ohs/codec.hpp"
#include "ohs/error.hpp"
#include "ohs/evaluator.hpp"
#include "ohs/inference.hpp"
#include "ohs/io.hpp"
#include "ohs/loss.hpp"
#include "ohs/synthetic.hpp"
#include "ohs/voxelizer.hpp"

namespace ohs {

struct SynthSettings {
  std::size_t num_scenes = 10;
  std::size_t num_objects = 8;
  std::vector<double> class_mix{0.5, 0.25, 0.25};
  std::size_t points_min = 1;
  std::size_t points_max = 500;
  double noise_sigma = 0.02;
  std::size_t clutter_points = 2000;
  double min_gap = 0.5;
};

struct RunConfig {
  GridConfig grid;
  std::vector<std::string> class_names{"Car", "Pedestrian", "Cyclist"};
  double C = 64.0;
  FocalParams focal;
  LossWeights weights;
  RegressionSpecs specs = RegressionSpecs::defaults(GridConfig{});
  InferenceConfig inference;
  EvalConfig eval;
  RelationEncoding encoding = RelationEncoding::Quadrant;
  std::uint64_t seed = 0;
  SynthSettings synth;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  HeadLayout head_layout() const { return {class_names.size(), specs, encoding}; }

  SynthSpec synth_spec(std::size_t scene_index) const {
    SynthSpec s;
    s.num_objects = synth.num_objects;
    s.class_mix = synth.class_mix;
    s.points_min = synth.points_min;
    s.points_max = synth.points_max;
    s.noise_sigma = synth.noise_sigma;
    s.clutter_points = synth.clutter_points;
    s.min_gap = synth.min_gap;
    s.grid = grid;
    s.seed = detail::splitmix64(seed ^ detail::splitmix64(scene_index + 1));
    const auto defaults = kitti_templates();
    s.templates.clear();
    for (const auto& name : class_names) {
      auto it = std::find_if(defaults.begin(), defaults.end(), [&](const ClassTemplate& t) { return t.name == name; });
      s.templates.push_back(it != defaults.end() ? *it : ClassTemplate{name, 2.0, 1.0, 1.5});
    }
    return s;
  }

  void validate() const {
    grid.validate();
    if (class_names.empty()) throw ConfigError("at least one class name is required");
    if (!(C > 0.0)) throw ConfigError("C must be positive");
    focal.validate();
    weights.validate();
    specs.validate();
    inference.validate();
    eval.validate();
    if (eval.iou_thresholds.size() != class_names.size()) {
      throw ConfigError("eval.iou_thresholds needs one entry per class");
    }
    if (synth.class_mix.size() != class_names.size()) {
      throw ConfigError("synth.class_mix needs one entry per class");
    }
  }
};

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline Range read_range(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(where + ": expected [min, max]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline double parse_c(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "Inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    throw ConfigError("C: expected a number or \"inf\"");
  }
  if (!j.is_number()) throw ConfigError("C: expected a number or \"inf\"");
  return j.get<double>();
}

}  // namespace detail

namespace detail {

inline RunConfig config_from_json_unchecked(const json& j) {
  using detail::read_if;
  RunConfig cfg;
  detail::reject_unknown(j, {"grid", "class_names", "C", "focal", "loss_weights", "regression", "inference",
                             "eval", "encoding", "seed", "synth"},
                         "config");
  if (j.contains("grid")) {
    const json& g = j["grid"];
    detail::reject_unknown(g, {"x_range", "y_range", "z_range", "voxel_size", "max_points_per_voxel", "downsample"},
                           "grid");
    if (g.contains("x_range")) cfg.grid.x = detail::read_range(g["x_range"], "grid.x_range");
    if (g.contains("y_range")) cfg.grid.y = detail::read_range(g["y_range"], "grid.y_range");
    if (g.contains("z_range")) cfg.grid.z = detail::read_range(g["z_range"], "grid.z_range");
    if (g.contains("voxel_size")) {
      const auto v = g["voxel_size"].get<std::vector<double>>();
      if (v.size() != 3) throw ConfigError("grid.voxel_size: expected [vx, vy, vz]");
      cfg.grid.vx = v[0];
      cfg.grid.vy = v[1];
      cfg.grid.vz = v[2];
    }
    read_if(g, "max_points_per_voxel", cfg.grid.max_points_per_voxel, "grid");
    read_if(g, "downsample", cfg.grid.downsample, "grid");
  }
  // z bins follow the vertical range unless given explicitly
  cfg.specs = RegressionSpecs::defaults(cfg.grid);
  read_if(j, "class_names", cfg.class_names, "config");
  if (j.contains("C")) cfg.C = detail::parse_c(j["C"]);
  if (j.contains("focal")) {
    detail::reject_unknown(j["focal"], {"alpha", "gamma"}, "focal");
    read_if(j["focal"], "alpha", cfg.focal.alpha, "focal");
    read_if(j["focal"], "gamma", cfg.focal.gamma, "focal");
  }
  if (j.contains("loss_weights")) {
    detail::reject_unknown(j["loss_weights"], {"delta", "beta", "zeta"}, "loss_weights");
    read_if(j["loss_weights"], "delta", cfg.weights.delta, "loss_weights");
    read_if(j["loss_weights"], "beta", cfg.weights.beta, "loss_weights");
    read_if(j["loss_weights"], "zeta", cfg.weights.zeta, "loss_weights");
  }
  if (j.contains("regression")) {
    const json& r = j["regression"];
    if (!r.is_object()) throw ConfigError("regression: expected an object");
    json merged = specs_to_json(cfg.specs);
    for (auto it = r.begin(); it != r.end(); ++it) merged[it.key()] = it.value();
    cfg.specs = specs_from_json(merged);
  }
  if (j.contains("inference")) {
    const json& in = j["inference"];
    detail::reject_unknown(in, {"score_threshold", "pre_nms_top_k", "nms_iou_threshold"}, "inference");
    read_if(in, "score_threshold", cfg.inference.score_threshold, "inference");
    read_if(in, "pre_nms_top_k", cfg.inference.pre_nms_top_k, "inference");
    read_if(in, "nms_iou_threshold", cfg.inference.nms_iou_threshold, "inference");
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    detail::reject_unknown(e, {"iou_thresholds", "mode"}, "eval");
    read_if(e, "iou_thresholds", cfg.eval.iou_thresholds, "eval");
    if (e.contains("mode")) {
      const auto m = e["mode"].get<std::string>();
      if (m == "bev") cfg.eval.mode = IouMode::Bev;
      else if (m == "3d") cfg.eval.mode = IouMode::ThreeD;
      else throw ConfigError("eval.mode: expected \"bev\" or \"3d\"");
    }
  }
  if (j.contains("encoding")) cfg.encoding = relation_encoding_from_string(j["encoding"].get<std::string>());
  read_if(j, "seed", cfg.seed, "config");
  if (j.contains("synth")) {
    const json& s = j["synth"];
    detail::reject_unknown(s, {"num_scenes", "num_objects", "class_mix", "points_min", "points_max", "noise_sigma",
                               "clutter_points", "min_gap"},
                           "synth");
    read_if(s, "num_scenes", cfg.synth.num_scenes, "synth");
    read_if(s, "num_objects", cfg.synth.num_objects, "synth");
    read_if(s, "class_mix", cfg.synth.class_mix, "synth");
    read_if(s, "points_min", cfg.synth.points_min, "synth");
    read_if(s, "points_max", cfg.synth.points_max, "synth");
    read_if(s, "noise_sigma", cfg.synth.noise_sigma, "synth");
    read_if(s, "clutter_points", cfg.synth.clutter_points, "synth");
    read_if(s, "min_gap", cfg.synth.min_gap, "synth");
  }
  return cfg;
}

}  // namespace detail

/// Parses a config document. Type errors surface as ConfigError.
inline RunConfig config_from_json(const json& j) {
  try {
    return detail::config_from_json_unchecked(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline json config_to_json(const RunConfig& cfg) {
  json c = std::isinf(cfg.C) ? json("inf") : json(cfg.C);
  return json{
      {"grid",
       {{"x_range", {cfg.grid.x.min, cfg.grid.x.max}},
        {"y_range", {cfg.grid.y.min, cfg.grid.y.max}},
        {"z_range", {cfg.grid.z.min, cfg.grid.z.max}},
        {"voxel_size", {cfg.grid.vx, cfg.grid.vy, cfg.grid.vz}},
        {"max_points_per_voxel", cfg.grid.max_points_per_voxel},
        {"downsample", cfg.grid.downsample}}},
      {"class_names", cfg.class_names},
      {"C", c},
      {"focal", {{"alpha", cfg.focal.alpha}, {"gamma", cfg.focal.gamma}}},
      {"loss_weights", {{"delta", cfg.weights.delta}, {"beta", cfg.weights.beta}, {"zeta", cfg.weights.zeta}}},
      {"regression", specs_to_json(cfg.specs)},
      {"inference",
       {{"score_threshold", cfg.inference.score_threshold},
        {"pre_nms_top_k", cfg.inference.pre_nms_top_k},
        {"nms_iou_threshold", cfg.inference.nms_iou_threshold}}},
      {"eval", {{"iou_thresholds", cfg.eval.iou_thresholds}, {"mode", to_string(cfg.eval.mode)}}},
      {"encoding", to_string(cfg.encoding)},
      {"seed", cfg.seed},
      {"synth",
       {{"num_scenes", cfg.synth.num_scenes},
        {"num_objects", cfg.synth.num_objects},
        {"class_mix", cfg.synth.class_mix},
        {"points_min", cfg.synth.points_min},
        {"points_max", cfg.synth.points_max},
        {"noise_sigma", cfg.synth.noise_sigma},
        {"clutter_points", cfg.synth.clutter_points},
        {"min_gap", cfg.synth.min_gap}}}};
}

inline RunConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(detail::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace ohs
