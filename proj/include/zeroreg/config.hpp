#pragma once

#include "zeroreg/error.hpp"
#include "zeroreg/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace zeroreg {

enum class SolverKind { kRansac, kKcoreGnc };
enum class YawMode { kWindow, kLiteral, kParabolic };

/// Every tunable of the pipeline.
struct PipelineConfig {
  // Geometric bootstrapping.
  double kappa_spheric = 0.10;
  double kappa_disc = 0.15;
  double tau_v = 0.05;
  double tau_l = 0.005;
  double tau_m = 0.02;
  double tau_g = 0.05;
  double delta_v = 0.10;
  int n_r = 2000;
  double r_max = 5.0;

  // Patch embedding.
  int n_fps = 1500;
  int n_patch = 512;
  int h = 7;
  int w = 20;
  int d = 32;
  std::string descriptor_backend = "cylindrical";
  std::string feature_pooling = "spectrum";  // radial | height | spectrum
  int feature_harmonics = 2;
  bool feature_root = true;  // pool sqrt(C) instead of C
  bool soft_sectors = true;  // split each point between the two nearest sector centers
  Point3 sensor_origin = Point3::Zero();

  // Matching and solvers.
  YawMode yaw_mode = YawMode::kParabolic;
  SolverKind solver = SolverKind::kKcoreGnc;
  int ransac_max_iter = 50000;
  double ransac_confidence = 0.999;
  double inlier_threshold_factor = 2.0;  // epsilon = factor * v
  double noise_bound_factor = 1.5;       // beta = factor * v
  int gnc_max_iter = 100;
  double gnc_mu_factor = 1.4;
  int tau_n = 25;

  std::uint64_t seed = 0;
  int threads = 0;

  void validate() const;
};

inline std::string to_string(SolverKind k) { return k == SolverKind::kRansac ? "ransac" : "kcore-gnc"; }
inline std::string to_string(YawMode m) {
  switch (m) {
    case YawMode::kWindow: return "window";
    case YawMode::kLiteral: return "literal";
    case YawMode::kParabolic: return "parabolic";
  }
  return "?";
}

namespace detail {

inline void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw Error(ErrorKind::kConfig, field + ": " + what);
}

}  // namespace detail

inline void PipelineConfig::validate() const {
  using detail::require;
  require(kappa_spheric > 0, "kappa_spheric", "must be > 0");
  require(kappa_disc > 0, "kappa_disc", "must be > 0");
  require(kappa_spheric < kappa_disc, "kappa_spheric", "must be < kappa_disc");
  require(tau_v > 0, "tau_v", "must be > 0");
  require(tau_l > 0 && tau_l <= 1, "tau_l", "must be in (0, 1]");
  require(tau_m > 0 && tau_m <= 1, "tau_m", "must be in (0, 1]");
  require(tau_g > 0 && tau_g <= 1, "tau_g", "must be in (0, 1]");
  require(tau_l <= tau_m, "tau_l", "tau_l <= tau_m violated");
  require(tau_m <= tau_g, "tau_m", "tau_m <= tau_g violated");
  require(delta_v > 0 && delta_v <= 1, "delta_v", "must be a fraction in (0, 1]");
  require(n_r >= 1, "n_r", "must be >= 1");
  require(r_max > 0, "r_max", "must be > 0");
  require(n_fps >= 1, "n_fps", "must be >= 1");
  require(n_patch >= 3, "n_patch", "must be >= 3");
  require(h >= 1, "h", "must be >= 1");
  require(w >= 2, "w", "must be >= 2");
  require(d >= 1, "d", "must be >= 1");
  require(descriptor_backend == "cylindrical", "descriptor_backend", "unknown backend '" + descriptor_backend + "'");
  require(feature_pooling == "radial" || feature_pooling == "height" || feature_pooling == "spectrum",
          "feature_pooling", "expects radial, height or spectrum");
  require(feature_harmonics >= 0 && feature_harmonics <= w / 2, "feature_harmonics", "must be in [0, w/2]");
  require(sensor_origin.allFinite(), "sensor_origin", "must be finite");
  require(ransac_max_iter >= 1, "ransac_max_iter", "must be >= 1");
  require(ransac_confidence > 0 && ransac_confidence <= 1, "ransac_confidence", "must be in (0, 1]");
  require(inlier_threshold_factor > 0, "inlier_threshold_factor", "must be > 0");
  require(noise_bound_factor > 0, "noise_bound_factor", "must be > 0");
  require(gnc_max_iter >= 1, "gnc_max_iter", "must be >= 1");
  require(gnc_mu_factor > 1, "gnc_mu_factor", "must be > 1");
  require(tau_n >= 0, "tau_n", "must be >= 0");
  require(threads >= 0, "threads", "must be >= 0");
}

inline nlohmann::json to_json(const PipelineConfig& c) {
  return {
      {"kappa_spheric", c.kappa_spheric},
      {"kappa_disc", c.kappa_disc},
      {"tau_v", c.tau_v},
      {"tau_l", c.tau_l},
      {"tau_m", c.tau_m},
      {"tau_g", c.tau_g},
      {"delta_v", c.delta_v},
      {"n_r", c.n_r},
      {"r_max", c.r_max},
      {"n_fps", c.n_fps},
      {"n_patch", c.n_patch},
      {"h", c.h},
      {"w", c.w},
      {"d", c.d},
      {"descriptor_backend", c.descriptor_backend},
      {"feature_pooling", c.feature_pooling},
      {"feature_harmonics", c.feature_harmonics},
      {"feature_root", c.feature_root},
      {"soft_sectors", c.soft_sectors},
      {"sensor_origin", {c.sensor_origin.x(), c.sensor_origin.y(), c.sensor_origin.z()}},
      {"yaw_mode", to_string(c.yaw_mode)},
      {"solver", to_string(c.solver)},
      {"ransac_max_iter", c.ransac_max_iter},
      {"ransac_confidence", c.ransac_confidence},
      {"inlier_threshold_factor", c.inlier_threshold_factor},
      {"noise_bound_factor", c.noise_bound_factor},
      {"gnc_max_iter", c.gnc_max_iter},
      {"gnc_mu_factor", c.gnc_mu_factor},
      {"tau_n", c.tau_n},
      {"seed", c.seed},
      {"threads", c.threads},
  };
}

namespace detail {

template <typename T>
T get_as(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, key + ": wrong type (" + e.what() + ")");
  }
}

inline void set_key(PipelineConfig& c, const std::string& key, const nlohmann::json& v) {
  if (key == "kappa_spheric") c.kappa_spheric = get_as<double>(v, key);
  else if (key == "kappa_disc") c.kappa_disc = get_as<double>(v, key);
  else if (key == "tau_v") c.tau_v = get_as<double>(v, key);
  else if (key == "tau_l") c.tau_l = get_as<double>(v, key);
  else if (key == "tau_m") c.tau_m = get_as<double>(v, key);
  else if (key == "tau_g") c.tau_g = get_as<double>(v, key);
  else if (key == "delta_v") c.delta_v = get_as<double>(v, key);
  else if (key == "n_r") c.n_r = get_as<int>(v, key);
  else if (key == "r_max") c.r_max = get_as<double>(v, key);
  else if (key == "n_fps") c.n_fps = get_as<int>(v, key);
  else if (key == "n_patch") c.n_patch = get_as<int>(v, key);
  else if (key == "h") c.h = get_as<int>(v, key);
  else if (key == "w") c.w = get_as<int>(v, key);
  else if (key == "d") c.d = get_as<int>(v, key);
  else if (key == "descriptor_backend") c.descriptor_backend = get_as<std::string>(v, key);
  else if (key == "feature_pooling") c.feature_pooling = get_as<std::string>(v, key);
  else if (key == "feature_harmonics") c.feature_harmonics = get_as<int>(v, key);
  else if (key == "feature_root") c.feature_root = get_as<bool>(v, key);
  else if (key == "soft_sectors") c.soft_sectors = get_as<bool>(v, key);
  else if (key == "sensor_origin") {
    const auto xyz = get_as<std::vector<double>>(v, key);
    require(xyz.size() == 3, key, "expects [x, y, z]");
    c.sensor_origin = Point3(xyz[0], xyz[1], xyz[2]);
  } else if (key == "yaw_mode") {
    const auto s = get_as<std::string>(v, key);
    require(s == "window" || s == "literal" || s == "parabolic", key, "expects 'window', 'literal' or 'parabolic'");
    c.yaw_mode = s == "window" ? YawMode::kWindow : s == "literal" ? YawMode::kLiteral : YawMode::kParabolic;
  } else if (key == "solver") {
    const auto s = get_as<std::string>(v, key);
    require(s == "ransac" || s == "kcore-gnc", key, "expects 'ransac' or 'kcore-gnc'");
    c.solver = s == "ransac" ? SolverKind::kRansac : SolverKind::kKcoreGnc;
  } else if (key == "ransac_max_iter") c.ransac_max_iter = get_as<int>(v, key);
  else if (key == "ransac_confidence") c.ransac_confidence = get_as<double>(v, key);
  else if (key == "inlier_threshold_factor") c.inlier_threshold_factor = get_as<double>(v, key);
  else if (key == "noise_bound_factor") c.noise_bound_factor = get_as<double>(v, key);
  else if (key == "gnc_max_iter") c.gnc_max_iter = get_as<int>(v, key);
  else if (key == "gnc_mu_factor") c.gnc_mu_factor = get_as<double>(v, key);
  else if (key == "tau_n") c.tau_n = get_as<int>(v, key);
  else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
  else if (key == "threads") c.threads = get_as<int>(v, key);
  else throw Error(ErrorKind::kConfig, key + ": unknown key");
}

}  // namespace detail

/// Names of every configuration key, in serialization order.
inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  const auto doc = to_json(PipelineConfig{});
  for (const auto& [k, _] : doc.items()) keys.push_back(k);
  return keys;
}

/// Applies the keys of `doc` on top of `base`; unknown keys are rejected.
/// The result is validated.
inline PipelineConfig merge_config(PipelineConfig base, const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::kConfig, "config document must be a JSON object");
  for (const auto& [key, value] : doc.items()) detail::set_key(base, key, value);
  base.validate();
  return base;
}

inline PipelineConfig config_from_json(const nlohmann::json& doc) { return merge_config(PipelineConfig{}, doc); }

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kParse, path + ": " + e.what());
  }
  return config_from_json(doc);
}

}  // namespace zeroreg
