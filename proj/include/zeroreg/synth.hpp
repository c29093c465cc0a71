#pragma once

// Synthetic scene pairs with planted ground truth, and the benchmark harness
// that registers them.

#include "zeroreg/bootstrap.hpp"
#include "zeroreg/config.hpp"
#include "zeroreg/error.hpp"
#include "zeroreg/pipeline.hpp"
#include "zeroreg/rng.hpp"
#include "zeroreg/rotation.hpp"
#include "zeroreg/types.hpp"

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace zeroreg {

enum class PrimitiveKind { kPlane, kBox, kSphere };

/// Plane: rectangle with half sizes (x, y) in its local xy-plane.
/// Box: half extents (x, y, z). Sphere: radius in extent.x().
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kBox;
  Point3 center = Point3::Zero();
  Mat3 rotation = Mat3::Identity();
  Vec3 extent = Vec3::Ones();

  double area() const {
    const double a = extent.x(), b = extent.y(), c = extent.z();
    switch (kind) {
      case PrimitiveKind::kPlane: return 4.0 * a * b;
      case PrimitiveKind::kBox: return 8.0 * (a * b + b * c + a * c);
      case PrimitiveKind::kSphere: return 4.0 * std::numbers::pi * a * a;
    }
    return 0.0;
  }
};

enum class SensorModel { kUniform, kDiscLidar };

struct SceneSpec {
  std::string preset = "indoor";         // object | indoor | outdoor
  std::vector<Primitive> primitives;     // empty: generated from the preset
  std::size_t points = 0;                // surface samples; 0: preset default
  std::optional<SensorModel> sensor;     // unset: preset default
  std::optional<double> z_compression;   // disc-lidar z scale; unset: preset default
  std::optional<double> scene_scale;     // multiplies generated preset geometry; unset: preset default
  double keep_ratio = 0.8;               // per-cloud sensor resampling
  double noise_sigma = 0.0;              // absolute, meters
  std::optional<double> noise_voxel_fraction;  // if set, sigma = fraction * v
  double overlap = 0.7;
  double max_rotation_deg = 180.0;
  double max_translation = -1.0;         // < 0: preset default
  std::uint64_t seed = 0;
  std::optional<SuccessThresholds> thresholds;

  void validate() const {
    if (!(overlap > 0.0 && overlap <= 1.0)) throw Error(ErrorKind::kConfig, "overlap: must be in (0, 1]");
    if (!(noise_sigma >= 0.0)) throw Error(ErrorKind::kConfig, "noise_sigma: must be >= 0");
    if (noise_voxel_fraction && !(*noise_voxel_fraction >= 0.0)) {
      throw Error(ErrorKind::kConfig, "noise_voxel_fraction: must be >= 0");
    }
    if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw Error(ErrorKind::kConfig, "keep_ratio: must be in (0, 1]");
    if (z_compression && !(*z_compression > 0.0)) throw Error(ErrorKind::kConfig, "z_compression: must be > 0");
    if (scene_scale && !(*scene_scale > 0.0)) throw Error(ErrorKind::kConfig, "scene_scale: must be > 0");
    if (!(max_rotation_deg >= 0.0 && max_rotation_deg <= 180.0)) {
      throw Error(ErrorKind::kConfig, "max_rotation_deg: must be in [0, 180]");
    }
    if (preset != "object" && preset != "indoor" && preset != "outdoor") {
      throw Error(ErrorKind::kConfig, "preset: unknown preset '" + preset + "'");
    }
  }

  SuccessThresholds success_thresholds() const {
    if (thresholds) return *thresholds;
    return preset == "outdoor" ? SuccessThresholds::outdoor() : SuccessThresholds::indoor();
  }
};

/// P and Q with T_gt * P ~ Q on the shared surface. `p_ids`/`q_ids` index the
/// generator points (world frame, which is also P's frame) each sample came
/// from.
struct GeneratedPair {
  PointCloud p, q;
  RigidTransform t_gt;
  std::vector<Point3> generator;
  std::vector<std::uint32_t> p_ids, q_ids;
  double noise_sigma = 0.0;
  double overlap = 0.0;
  SuccessThresholds thresholds;
};

namespace synth_detail {

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Mat3 yaw(double a) { return rotation_z(a); }

inline Mat3 random_rotation(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-9);
  return v.normalized();
}

/// Rotation angle with the Haar density restricted to [0, max]: the CDF is
/// proportional to theta - sin(theta), inverted by bisection.
inline double haar_angle(Rng& rng, double max_angle) {
  if (max_angle <= 0.0) return 0.0;
  const double u = uniform(rng, 0.0, 1.0) * (max_angle - std::sin(max_angle));
  double lo = 0.0, hi = max_angle;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid - std::sin(mid) < u) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline Primitive plane(const Point3& c, const Mat3& r, double hx, double hy) {
  return {PrimitiveKind::kPlane, c, r, Vec3(hx, hy, 0.0)};
}

inline Primitive box(const Point3& c, const Mat3& r, const Vec3& half) { return {PrimitiveKind::kBox, c, r, half}; }

inline Primitive sphere(const Point3& c, double radius) {
  return {PrimitiveKind::kSphere, c, Mat3::Identity(), Vec3(radius, radius, radius)};
}

inline std::vector<Primitive> object_scene(Rng& rng) {
  std::vector<Primitive> prims;
  // A body with attached parts, about half a meter across.
  prims.push_back(box(Point3::Zero(), yaw(uniform(rng, 0, 2 * std::numbers::pi)),
                      Vec3(uniform(rng, 0.12, 0.18), uniform(rng, 0.08, 0.12), uniform(rng, 0.05, 0.09))));
  const int parts = 6 + static_cast<int>(rng() % 4);
  for (int i = 0; i < parts; ++i) {
    const Point3 c = random_unit(rng) * uniform(rng, 0.12, 0.22);
    if (rng() % 3) {
      prims.push_back(box(c, random_rotation(rng),
                          Vec3(uniform(rng, 0.02, 0.07), uniform(rng, 0.015, 0.05), uniform(rng, 0.01, 0.04))));
    } else {
      prims.push_back(sphere(c, uniform(rng, 0.025, 0.06)));
    }
  }
  return prims;
}

inline std::vector<Primitive> indoor_scene(Rng& rng) {
  std::vector<Primitive> prims;
  const double hx = uniform(rng, 4.5, 5.5), hy = uniform(rng, 3.5, 4.5), hz = 1.5;
  const Mat3 i = Mat3::Identity();
  const Mat3 rx = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitX()).toRotationMatrix();
  const Mat3 ry = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitY()).toRotationMatrix();
  prims.push_back(plane(Point3(0, 0, -hz), i, hx, hy));
  prims.push_back(plane(Point3(0, 0, hz), i, hx, hy));
  prims.push_back(plane(Point3(0, -hy, 0), rx, hx, hz));
  prims.push_back(plane(Point3(0, hy, 0), rx, hx, hz));
  prims.push_back(plane(Point3(-hx, 0, 0), ry, hz, hy));
  prims.push_back(plane(Point3(hx, 0, 0), ry, hz, hy));
  // Furniture stands on the floor away from the room center, with smaller
  // items stacked on top.
  auto spot = [&](double margin) {
    Point3 c;
    do {
      c = Point3(uniform(rng, -hx + margin, hx - margin), uniform(rng, -hy + margin, hy - margin), 0.0);
    } while (c.head<2>().norm() < 1.8);
    return c;
  };
  const int furniture = 16 + static_cast<int>(rng() % 8);
  for (int k = 0; k < furniture; ++k) {
    const Vec3 half(uniform(rng, 0.15, 0.7), uniform(rng, 0.15, 0.5), uniform(rng, 0.15, 0.8));
    Point3 c = spot(0.8);
    c.z() = -hz + half.z();
    const double a = uniform(rng, 0, std::numbers::pi);
    prims.push_back(box(c, yaw(a), half));
    if (rng() % 2) {
      const Vec3 top(uniform(rng, 0.05, 0.2), uniform(rng, 0.05, 0.2), uniform(rng, 0.05, 0.25));
      const Point3 off(uniform(rng, -0.5, 0.5) * half.x(), uniform(rng, -0.5, 0.5) * half.y(), half.z() + top.z());
      prims.push_back(box(c + yaw(a) * off, yaw(uniform(rng, 0, std::numbers::pi)), top));
    }
  }
  const int balls = 6 + static_cast<int>(rng() % 5);
  for (int k = 0; k < balls; ++k) {
    Point3 c = spot(0.6);
    c.z() = uniform(rng, -1.0, 1.0);
    prims.push_back(sphere(c, uniform(rng, 0.12, 0.35)));
  }
  return prims;
}

inline std::vector<Primitive> outdoor_scene(Rng& rng) {
  std::vector<Primitive> prims;
  const double ground = -1.8;
  prims.push_back(plane(Point3(0, 0, ground), Mat3::Identity(), 40.0, 40.0));
  auto polar = [&](double lo, double hi) {
    const double a = uniform(rng, 0, 2 * std::numbers::pi), d = uniform(rng, lo, hi);
    return Point3(d * std::cos(a), d * std::sin(a), ground);
  };
  const int buildings = 14 + static_cast<int>(rng() % 6);
  for (int k = 0; k < buildings; ++k) {
    const Vec3 half(uniform(rng, 2.0, 7.0), uniform(rng, 2.0, 6.0), uniform(rng, 1.5, 6.0));
    Point3 c = polar(14.0, 36.0);
    c.z() += half.z();
    const double a = uniform(rng, 0, std::numbers::pi);
    prims.push_back(box(c, yaw(a), half));
    if (rng() % 2) {
      // Annex or rooftop structure.
      const Vec3 extra(uniform(rng, 0.8, 2.5), uniform(rng, 0.8, 2.5), uniform(rng, 0.6, 2.0));
      const Point3 off(uniform(rng, -0.6, 0.6) * half.x(), uniform(rng, -0.6, 0.6) * half.y(), half.z() + extra.z());
      prims.push_back(box(c + yaw(a) * off, yaw(uniform(rng, 0, std::numbers::pi)), extra));
    }
  }
  const int poles = 16 + static_cast<int>(rng() % 8);
  for (int k = 0; k < poles; ++k) {
    Point3 c = polar(5.0, 32.0);
    const double h = uniform(rng, 2.0, 4.0);
    c.z() += h;
    prims.push_back(box(c, yaw(uniform(rng, 0, std::numbers::pi)), Vec3(0.2, 0.2, h)));
  }
  const int trees = 10 + static_cast<int>(rng() % 6);
  for (int k = 0; k < trees; ++k) {
    Point3 c = polar(7.0, 34.0);
    const double r = uniform(rng, 1.0, 2.5), trunk = uniform(rng, 1.5, 3.0);
    prims.push_back(box(c + Vec3(0, 0, trunk), Mat3::Identity(), Vec3(0.25, 0.25, trunk)));
    prims.push_back(sphere(c + Vec3(0, 0, 2 * trunk + 0.7 * r), r));
  }
  const int cars = 6 + static_cast<int>(rng() % 6);
  for (int k = 0; k < cars; ++k) {
    Point3 c = polar(5.0, 25.0);
    c.z() += 0.75;
    prims.push_back(box(c, yaw(uniform(rng, 0, std::numbers::pi)), Vec3(2.2, 0.9, 0.75)));
  }
  return prims;
}

inline Point3 sample_surface(const Primitive& p, Rng& rng) {
  Vec3 local;
  const double a = p.extent.x(), b = p.extent.y(), c = p.extent.z();
  switch (p.kind) {
    case PrimitiveKind::kPlane:
      local = Vec3(uniform(rng, -a, a), uniform(rng, -b, b), 0.0);
      break;
    case PrimitiveKind::kSphere:
      return p.center + random_unit(rng) * a;
    case PrimitiveKind::kBox: {
      const double ab = a * b, bc = b * c, ac = a * c;
      const double pick = uniform(rng, 0.0, ab + bc + ac);
      const double sign = (rng() & 1) ? 1.0 : -1.0;
      if (pick < ab) local = Vec3(uniform(rng, -a, a), uniform(rng, -b, b), sign * c);
      else if (pick < ab + bc) local = Vec3(sign * a, uniform(rng, -b, b), uniform(rng, -c, c));
      else local = Vec3(uniform(rng, -a, a), sign * b, uniform(rng, -c, c));
      break;
    }
  }
  return p.center + p.rotation * local;
}

struct PresetDefaults {
  std::size_t points;
  double max_translation;
  SensorModel sensor;
  double z_compression;
  double scene_scale;
};

inline PresetDefaults preset_defaults(const std::string& preset) {
  if (preset == "object") return {30000, 0.02, SensorModel::kUniform, 1.0, 1.0};
  if (preset == "outdoor") return {150000, 3.0, SensorModel::kDiscLidar, 0.6, 1.0};
  return {120000, 0.5, SensorModel::kUniform, 1.0, 1.0};
}

/// Overlap of the two half-space crops {s <= hi} and {s >= lo} of sorted
/// projections, as shared / smaller crop.
inline double crop_overlap(const std::vector<double>& sorted, double fraction) {
  const std::size_t n = sorted.size();
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (keep == 0) return 0.0;
  const std::size_t shared = keep * 2 > n ? keep * 2 - n : 0;
  return static_cast<double>(shared) / static_cast<double>(keep);
}

}  // namespace synth_detail

/// Draws the scene surface once in the world frame, crops two overlapping
/// half-spaces, moves the second by a random T_gt, then resamples and adds
/// noise. Reproducible from `spec.seed`.
inline GeneratedPair generate_pair(const SceneSpec& spec, const PipelineConfig& cfg = {}) {
  using namespace synth_detail;
  spec.validate();
  const auto defaults = preset_defaults(spec.preset);
  Rng rng(mix_seed(spec.seed, 0x7363));

  std::vector<Primitive> prims = spec.primitives;
  if (prims.empty()) {
    prims = spec.preset == "object" ? object_scene(rng) : spec.preset == "outdoor" ? outdoor_scene(rng) : indoor_scene(rng);
    const double k = spec.scene_scale.value_or(defaults.scene_scale);
    for (auto& p : prims) {
      p.center *= k;
      p.extent *= k;
    }
  }
  const std::size_t total = spec.points ? spec.points : defaults.points;
  double area = 0.0;
  for (const auto& p : prims) area += p.area();
  if (!(area > 0.0)) throw Error(ErrorKind::kInvalidArgument, "scene has no surface area");

  GeneratedPair out;
  out.thresholds = spec.success_thresholds();
  const SensorModel sensor = spec.sensor.value_or(defaults.sensor);
  const double z_scale = sensor == SensorModel::kDiscLidar ? spec.z_compression.value_or(defaults.z_compression) : 1.0;
  for (const auto& p : prims) {
    const auto count = static_cast<std::size_t>(std::llround(static_cast<double>(total) * p.area() / area));
    for (std::size_t k = 0; k < count; ++k) {
      Point3 x = sample_surface(p, rng);
      x.z() *= z_scale;
      out.generator.push_back(x);
    }
  }

  // Overlap: two half-space crops along a random direction (horizontal for
  // room and street scenes), with the crop fraction bisected to the target.
  const Vec3 dir = spec.preset == "object" ? random_unit(rng) : [&] {
    const double a = uniform(rng, 0, 2 * std::numbers::pi);
    return Vec3(std::cos(a), std::sin(a), 0.0);
  }();
  std::vector<double> proj(out.generator.size());
  for (std::size_t i = 0; i < proj.size(); ++i) proj[i] = out.generator[i].dot(dir);
  std::vector<double> sorted = proj;
  std::sort(sorted.begin(), sorted.end());
  double lo_f = 0.5, hi_f = 1.0;
  for (int it = 0; it < 60 && hi_f - lo_f > 1e-9; ++it) {
    const double mid = 0.5 * (lo_f + hi_f);
    if (crop_overlap(sorted, mid) < spec.overlap) lo_f = mid;
    else hi_f = mid;
  }
  const double fraction = hi_f;
  const std::size_t n = sorted.size();
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (keep == 0 || n == 0) throw Error(ErrorKind::kInsufficientData, "overlap crop leaves an empty cloud; re-seed");
  const double p_hi = sorted[keep - 1];
  const double q_lo = sorted[n - keep];
  out.overlap = crop_overlap(sorted, fraction);

  const double max_angle = spec.max_rotation_deg * std::numbers::pi / 180.0;
  const double max_t = spec.max_translation >= 0.0 ? spec.max_translation : defaults.max_translation;
  out.t_gt.rotation = Eigen::AngleAxisd(haar_angle(rng, max_angle), random_unit(rng)).toRotationMatrix();
  out.t_gt.translation = random_unit(rng) * max_t * std::cbrt(uniform(rng, 0.0, 1.0));

  std::bernoulli_distribution keep_p(spec.keep_ratio), keep_q(spec.keep_ratio);
  for (std::size_t i = 0; i < out.generator.size(); ++i) {
    if (proj[i] <= p_hi && keep_p(rng)) out.p_ids.push_back(static_cast<std::uint32_t>(i));
    if (proj[i] >= q_lo && keep_q(rng)) out.q_ids.push_back(static_cast<std::uint32_t>(i));
  }
  if (out.p_ids.size() < 3 || out.q_ids.size() < 3) {
    throw Error(ErrorKind::kInsufficientData, "overlap crop leaves an empty cloud; re-seed");
  }
  for (auto i : out.p_ids) out.p.points.push_back(out.generator[i]);
  for (auto i : out.q_ids) out.q.points.push_back(out.t_gt * out.generator[i]);

  out.noise_sigma = spec.noise_sigma;
  if (spec.noise_voxel_fraction) out.noise_sigma = *spec.noise_voxel_fraction * estimate_voxel_size(out.p, out.q, cfg);
  if (out.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, out.noise_sigma);
    for (auto& x : out.p.points) x += Vec3(noise(rng), noise(rng), noise(rng));
    for (auto& x : out.q.points) x += Vec3(noise(rng), noise(rng), noise(rng));
  }
  out.p.source = "synth:" + spec.preset + ":" + std::to_string(spec.seed) + ":P";
  out.q.source = "synth:" + spec.preset + ":" + std::to_string(spec.seed) + ":Q";
  return out;
}

/// Two clouds drawn from unrelated scenes of the same preset (no true
/// overlap). T_gt is identity and meaningless.
inline GeneratedPair generate_negative_pair(const SceneSpec& spec, const PipelineConfig& cfg = {}) {
  SceneSpec a = spec, b = spec;
  b.seed = mix_seed(spec.seed, 0x6e6567);
  auto pa = generate_pair(a, cfg);
  auto pb = generate_pair(b, cfg);
  GeneratedPair out = std::move(pa);
  out.q = std::move(pb.q);
  out.q_ids.clear();
  out.overlap = 0.0;
  out.t_gt = RigidTransform::identity();
  return out;
}

/// Specs for a named preset; "mixed" cycles object, indoor, outdoor. Each pair
/// seed derives from (seed, pair index).
inline std::vector<SceneSpec> preset_specs(const std::string& preset, std::size_t pairs, std::uint64_t seed,
                                           const SceneSpec& base = {}) {
  static const char* kCycle[] = {"object", "indoor", "outdoor"};
  if (preset != "mixed" && preset != "object" && preset != "indoor" && preset != "outdoor") {
    throw Error(ErrorKind::kConfig, "unknown preset '" + preset + "' (expected object, indoor, outdoor, mixed)");
  }
  std::vector<SceneSpec> specs;
  for (std::size_t i = 0; i < pairs; ++i) {
    SceneSpec s = base;
    s.preset = preset == "mixed" ? kCycle[i % 3] : preset;
    s.seed = mix_seed(seed, i);
    specs.push_back(s);
  }
  return specs;
}

// Spec (de)serialization.

inline nlohmann::json to_json(const SceneSpec& s) {
  nlohmann::json j = {{"preset", s.preset},
                      {"points", s.points},
                      {"keep_ratio", s.keep_ratio},
                      {"noise_sigma", s.noise_sigma},
                      {"overlap", s.overlap},
                      {"max_rotation_deg", s.max_rotation_deg},
                      {"max_translation", s.max_translation},
                      {"seed", s.seed}};
  if (s.sensor) j["sensor"] = *s.sensor == SensorModel::kDiscLidar ? "disc-lidar" : "uniform";
  if (s.z_compression) j["z_compression"] = *s.z_compression;
  if (s.scene_scale) j["scene_scale"] = *s.scene_scale;
  if (s.noise_voxel_fraction) j["noise_voxel_fraction"] = *s.noise_voxel_fraction;
  if (s.thresholds) {
    j["tau_trans"] = s.thresholds->translation_m;
    j["tau_rot"] = s.thresholds->rotation_deg;
  }
  return j;
}

inline SceneSpec scene_spec_from_json(const nlohmann::json& j, const SceneSpec& base = {}) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, "scene spec must be a JSON object");
  SceneSpec s = base;
  std::optional<double> tau_trans, tau_rot;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "preset") s.preset = v.get<std::string>();
      else if (key == "points") s.points = v.get<std::size_t>();
      else if (key == "sensor") {
        const auto m = v.get<std::string>();
        if (m != "uniform" && m != "disc-lidar") throw Error(ErrorKind::kConfig, "sensor: expects uniform or disc-lidar");
        s.sensor = m == "uniform" ? SensorModel::kUniform : SensorModel::kDiscLidar;
      } else if (key == "z_compression") s.z_compression = v.get<double>();
      else if (key == "scene_scale") s.scene_scale = v.get<double>();
      else if (key == "keep_ratio") s.keep_ratio = v.get<double>();
      else if (key == "noise_sigma") s.noise_sigma = v.get<double>();
      else if (key == "noise_voxel_fraction") s.noise_voxel_fraction = v.get<double>();
      else if (key == "overlap") s.overlap = v.get<double>();
      else if (key == "max_rotation_deg") s.max_rotation_deg = v.get<double>();
      else if (key == "max_translation") s.max_translation = v.get<double>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else if (key == "tau_trans") tau_trans = v.get<double>();
      else if (key == "tau_rot") tau_rot = v.get<double>();
      else if (key == "pairs") continue;
      else throw Error(ErrorKind::kConfig, key + ": unknown scene key");
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kConfig, key + ": wrong type (" + e.what() + ")");
    }
  }
  if (tau_trans || tau_rot) {
    SuccessThresholds th = s.success_thresholds();
    if (tau_trans) th.translation_m = *tau_trans;
    if (tau_rot) th.rotation_deg = *tau_rot;
    s.thresholds = th;
  }
  s.validate();
  return s;
}

/// Benchmark spec document: either an array of scene specs, or an object with
/// "scenes" (array) and optional "defaults" merged under each scene. A scene
/// with "pairs": k expands to k specs seeded from its own seed.
inline std::vector<SceneSpec> load_benchmark_specs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open benchmark spec '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kParse, path + ": " + e.what());
  }
  SceneSpec base;
  nlohmann::json scenes = doc;
  if (doc.is_object()) {
    if (doc.contains("defaults")) base = scene_spec_from_json(doc["defaults"]);
    if (!doc.contains("scenes")) throw Error(ErrorKind::kParse, path + ": missing \"scenes\" array");
    scenes = doc["scenes"];
  }
  if (!scenes.is_array()) throw Error(ErrorKind::kParse, path + ": scenes must be an array");
  std::vector<SceneSpec> specs;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    SceneSpec s;
    try {
      s = scene_spec_from_json(scenes[i], base);
    } catch (const Error& e) {
      throw Error(ErrorKind::kParse, path + ": scenes[" + std::to_string(i) + "]: " + e.what());
    }
    const std::size_t copies = scenes[i].contains("pairs") ? scenes[i]["pairs"].get<std::size_t>() : 1;
    for (std::size_t k = 0; k < copies; ++k) {
      SceneSpec c = s;
      if (copies > 1) c.seed = mix_seed(s.seed, k);
      specs.push_back(c);
    }
  }
  return specs;
}

// Harness.

struct BenchmarkRow {
  std::size_t pair_id = 0;
  std::string preset;
  RegistrationMode mode = RegistrationMode::kFull;
  bool success = false;
  double rte_m = 0.0;
  double rre_deg = 0.0;
  std::size_t inliers = 0;
  bool early_exited = false;
  double wall_ms = 0.0;
  double voxel_size = 0.0;
  std::vector<StageTiming> timings;
  std::string error;
};

struct BenchmarkReport {
  RegistrationMode mode = RegistrationMode::kFull;
  std::vector<BenchmarkRow> rows;
  double success_rate = 0.0;
  double mean_rte_m = 0.0;   // over successes
  double mean_rre_deg = 0.0; // over successes
  double mean_wall_ms = 0.0;
  double total_wall_ms = 0.0;
  double early_exit_fraction = 0.0;
  std::map<std::string, double> mean_stage_ms;

  /// Recomputes every aggregate from `rows`.
  void aggregate() {
    std::vector<PairMetric> metrics;
    total_wall_ms = 0.0;
    std::size_t exits = 0;
    mean_stage_ms.clear();
    for (const auto& r : rows) {
      metrics.push_back({r.rre_deg, r.rte_m, r.success});
      total_wall_ms += r.wall_ms;
      exits += r.early_exited ? 1 : 0;
      for (const auto& t : r.timings) mean_stage_ms[t.stage] += t.ms;
    }
    const auto m = MetricReport::from(std::move(metrics));
    success_rate = m.success_rate;
    mean_rte_m = m.mean_rte_m;
    mean_rre_deg = m.mean_rre_deg;
    const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
    mean_wall_ms = total_wall_ms / n;
    early_exit_fraction = static_cast<double>(exits) / n;
    for (auto& [_, v] : mean_stage_ms) v /= n;
  }
};

/// One registration against its planted transform; failures become
/// unsuccessful rows.
inline BenchmarkRow run_pair(const GeneratedPair& pair, const PipelineConfig& cfg, RegistrationMode mode,
                             std::size_t pair_id = 0, const std::string& preset = "") {
  BenchmarkRow row;
  row.pair_id = pair_id;
  row.preset = preset;
  row.mode = mode;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto result = register_clouds(pair.p, pair.q, cfg, mode);
    row.wall_ms = detail::elapsed_ms(start);
    const auto m = evaluate(pair.t_gt, result.transform, pair.thresholds);
    row.success = m.success;
    row.rte_m = m.rte_m;
    row.rre_deg = m.rre_deg;
    row.inliers = result.inlier_count;
    row.early_exited = result.early_exited;
    row.voxel_size = result.voxel_size;
    row.timings = result.timings;
  } catch (const Error& e) {
    row.wall_ms = detail::elapsed_ms(start);
    row.error = e.what();
    const auto m = evaluate(pair.t_gt, RigidTransform::identity(), pair.thresholds);
    row.rte_m = m.rte_m;
    row.rre_deg = m.rre_deg;
  }
  return row;
}

/// Generates and registers every spec in order. Pairs run one after another
/// so per-pair wall times are not distorted; parallelism is inside each
/// registration.
inline BenchmarkReport run_benchmark(const std::vector<SceneSpec>& specs, const PipelineConfig& cfg,
                                     RegistrationMode mode) {
  if (specs.empty()) throw Error(ErrorKind::kInvalidArgument, "benchmark needs at least one scene spec");
  BenchmarkReport report;
  report.mode = mode;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    GeneratedPair pair;
    try {
      pair = generate_pair(specs[i], cfg);
    } catch (const Error& e) {
      BenchmarkRow row;
      row.pair_id = i;
      row.preset = specs[i].preset;
      row.mode = mode;
      row.error = e.what();
      report.rows.push_back(row);
      continue;
    }
    report.rows.push_back(run_pair(pair, cfg, mode, i, specs[i].preset));
  }
  report.aggregate();
  return report;
}

inline nlohmann::json to_json(const BenchmarkReport& r, const PipelineConfig& cfg) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json timings = nlohmann::json::object();
    for (const auto& t : row.timings) timings[t.stage] = t.ms;
    nlohmann::json j = {{"pair_id", row.pair_id},   {"preset", row.preset},
                        {"mode", to_string(row.mode)}, {"success", row.success},
                        {"rte_m", row.rte_m},       {"rre_deg", row.rre_deg},
                        {"inliers", row.inliers},   {"early_exited", row.early_exited},
                        {"wall_ms", row.wall_ms},   {"voxel_size", row.voxel_size},
                        {"timings_ms", timings}};
    if (!row.error.empty()) j["error"] = row.error;
    rows.push_back(j);
  }
  return {{"schema", 1},
          {"mode", to_string(r.mode)},
          {"pairs", r.rows.size()},
          {"success_rate", r.success_rate},
          {"mean_rte_m", r.mean_rte_m},
          {"mean_rre_deg", r.mean_rre_deg},
          {"mean_wall_ms", r.mean_wall_ms},
          {"total_wall_ms", r.total_wall_ms},
          {"early_exit_fraction", r.early_exit_fraction},
          {"mean_stage_ms", r.mean_stage_ms},
          {"config", to_json(cfg)},
          {"rows", rows}};
}

inline std::string to_csv(const BenchmarkReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "pair_id,mode,success,rte_m,rre_deg,inliers,early_exited,wall_ms\n";
  for (const auto& row : r.rows) {
    out << row.pair_id << ',' << to_string(row.mode) << ',' << (row.success ? 1 : 0) << ',' << row.rte_m << ','
        << row.rre_deg << ',' << row.inliers << ',' << (row.early_exited ? 1 : 0) << ',' << row.wall_ms << '\n';
  }
  return out.str();
}

}  // namespace zeroreg
