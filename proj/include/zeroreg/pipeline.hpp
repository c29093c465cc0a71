#pragma once

// Full multi-scale registration, the early-exit variant, and evaluation
// metrics.

#include "zeroreg/bootstrap.hpp"
#include "zeroreg/config.hpp"
#include "zeroreg/descriptor.hpp"
#include "zeroreg/error.hpp"
#include "zeroreg/kdtree.hpp"
#include "zeroreg/matching.hpp"
#include "zeroreg/rotation.hpp"
#include "zeroreg/sampling.hpp"
#include "zeroreg/solver.hpp"
#include "zeroreg/types.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <numbers>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace zeroreg {

struct ScaleDiagnostics {
  Scale scale = Scale::kMiddle;
  bool processed = false;
  std::size_t keypoints_p = 0;
  std::size_t keypoints_q = 0;
  std::size_t dropped_p = 0;
  std::size_t dropped_q = 0;
  std::size_t matches = 0;
  std::size_t hypotheses = 0;
  std::string note;
};

struct StageTiming {
  std::string stage;
  double ms = 0.0;
};

struct RegistrationResult {
  RigidTransform transform;
  std::size_t inlier_count = 0;
  std::vector<std::uint32_t> inliers;  // indices into the pooled correspondences
  std::size_t correspondences = 0;
  std::array<ScaleDiagnostics, 3> scales{
      ScaleDiagnostics{Scale::kLocal}, ScaleDiagnostics{Scale::kMiddle}, ScaleDiagnostics{Scale::kGlobal}};
  double voxel_size = 0.0;
  ScaleRadii radii;
  double sphericity = 0.0;
  double spread = 0.0;
  bool spheric = false;
  std::size_t downsampled_p = 0;
  std::size_t downsampled_q = 0;
  bool early_exited = false;
  bool converged = true;
  std::vector<StageTiming> timings;
  double total_ms = 0.0;
  std::vector<Scale> trace;  // scales in processing order
};

namespace detail {

class StageClock {
 public:
  explicit StageClock(std::vector<StageTiming>& sink) : sink_(sink) {}

  template <typename F>
  auto run(const std::string& stage, F&& fn) {
    const auto start = std::chrono::steady_clock::now();
    auto record = [&] { add(stage, elapsed_ms(start)); };
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        record();
      } else {
        auto out = fn();
        record();
        return out;
      }
    } catch (const RegistrationFailure&) {
      record();
      throw;
    } catch (const Error& e) {
      record();
      throw RegistrationFailure(stage, e.kind(), e.what());
    }
  }

 private:
  void add(const std::string& stage, double ms) {
    for (auto& t : sink_) {
      if (t.stage == stage) {
        t.ms += ms;
        return;
      }
    }
    sink_.push_back({stage, ms});
  }

  std::vector<StageTiming>& sink_;
};

/// Shared state of one registration run: resolved resolution, downsampled
/// clouds with their indices, keypoints, and per-scale correspondences.
class Registration {
 public:
  Registration(const PointCloud& p, const PointCloud& q, const PipelineConfig& cfg, RegistrationResult& result)
      : cfg_(cfg), result_(result), clock_(result.timings) {
    cfg_.validate();
    backend_ = make_backend(cfg_);

    const auto est = clock_.run("bootstrap", [&] { return estimate_voxel(p, q, cfg_); });
    result_.voxel_size = est.voxel_size;
    result_.sphericity = est.shape.sphericity;
    result_.spread = est.shape.spread;
    result_.spheric = est.spheric;

    clock_.run("downsample", [&] {
      if (!(est.voxel_size > 0.0)) throw Error(ErrorKind::kInsufficientData, "resolved voxel size is zero");
      p_ = voxel_downsample(p, est.voxel_size);
      q_ = voxel_downsample(q, est.voxel_size);
      if (p_.size() < 3 || q_.size() < 3) {
        throw Error(ErrorKind::kInsufficientData, "fewer than 3 voxels survive downsampling");
      }
    });
    result_.downsampled_p = p_.size();
    result_.downsampled_q = q_.size();

    result_.radii = clock_.run("radius", [&] {
      return estimate_radii(larger_cloud(p_, q_), cfg_, mix_seed(cfg_.seed, 0x726164));
    });

    clock_.run("keypoints", [&] {
      index_p_.emplace(p_.points);
      index_q_.emplace(q_.points);
      // The start rule makes the sample independent of the scale, so it is
      // computed once per cloud.
      kp_p_ = farthest_point_sampling(p_, static_cast<std::size_t>(cfg_.n_fps));
      kp_q_ = farthest_point_sampling(q_, static_cast<std::size_t>(cfg_.n_fps));
    });
  }

  double epsilon() const { return cfg_.inlier_threshold_factor * result_.voxel_size; }
  double noise_bound() const { return cfg_.noise_bound_factor * result_.voxel_size; }

  /// Describes and matches one scale. A scale without usable patches or
  /// matches contributes nothing instead of failing the run.
  const CorrespondenceSet& process(Scale s) {
    auto& diag = result_.scales[static_cast<int>(s)];
    auto& out = pairs_[static_cast<int>(s)];
    diag.processed = true;
    result_.trace.push_back(s);
    const double r = result_.radii[static_cast<int>(s)];
    std::optional<DescriptorSet> sp, sq;
    try {
      clock_.run("describe", [&] {
        sp.emplace(describe_set(p_, *index_p_, kp_p_, r, s, cfg_, *backend_, mix_seed(cfg_.seed, 0x50)));
        sq.emplace(describe_set(q_, *index_q_, kp_q_, r, s, cfg_, *backend_, mix_seed(cfg_.seed, 0x51)));
      });
    } catch (const RegistrationFailure& f) {
      if (f.cause() != ErrorKind::kInsufficientData) throw;
      diag.note = f.what();
      return out;
    }
    diag.keypoints_p = sp->size();
    diag.keypoints_q = sq->size();
    diag.dropped_p = sp->dropped;
    diag.dropped_q = sq->dropped;
    clock_.run("match", [&] {
      ScaleMatchStats stats;
      out = match_scale(*sp, *sq, cfg_, &stats);
      diag.matches = stats.mutual_matches;
    });
    diag.hypotheses = out.size();
    return out;
  }

  CorrespondenceSet pooled(const std::vector<Scale>& order) const {
    CorrespondenceSet all;
    for (auto s : order) all.append(pairs_[static_cast<int>(s)]);
    return all;
  }

  /// Consensus over `pairs`, then the configured robust solver on the
  /// consensus inliers. Returns the solver report with inlier indices mapped
  /// back into `pairs`.
  SolverReport solve(const CorrespondenceSet& pairs, SolverKind kind) {
    if (pairs.empty()) {
      throw RegistrationFailure("consensus", ErrorKind::kNoHypothesis, "no correspondences at any scale");
    }
    const auto consensus = clock_.run("consensus", [&] { return consensus_maximize(pairs, epsilon(), cfg_.threads); });
    const auto candidates = pairs.subset(consensus.inliers);
    SolverReport report = clock_.run("solve", [&] {
      if (kind == SolverKind::kRansac) {
        RansacOptions opt;
        opt.inlier_threshold = epsilon();
        opt.max_iterations = cfg_.ransac_max_iter;
        opt.confidence = cfg_.ransac_confidence;
        opt.seed = mix_seed(cfg_.seed, 0x52);
        auto rep = ransac(candidates, opt);
        if (!rep.converged || rep.inliers.size() < 3) {
          throw Error(ErrorKind::kInsufficientStructure, "RANSAC found no model with 3 inliers");
        }
        return rep;
      }
      return kiss_solver(candidates, noise_bound(), cfg_.gnc_max_iter, cfg_.gnc_mu_factor);
    });
    for (auto& i : report.inliers) i = consensus.inliers[i];
    return report;
  }

  void finalize(const CorrespondenceSet& pairs, const SolverReport& report) {
    clock_.run("refine", [&] {
      result_.transform = kabsch_subset(pairs, report.inliers);
    });
    result_.inliers = report.inliers;
    result_.inlier_count = report.inliers.size();
    result_.correspondences = pairs.size();
    result_.converged = report.converged;
  }

  const PipelineConfig& config() const { return cfg_; }

 private:
  PipelineConfig cfg_;
  RegistrationResult& result_;
  StageClock clock_;
  std::unique_ptr<DescriptorBackend> backend_;
  PointCloud p_, q_;
  std::optional<SpatialIndex> index_p_, index_q_;
  std::vector<std::uint32_t> kp_p_, kp_q_;
  std::array<CorrespondenceSet, 3> pairs_;
};

inline constexpr std::array<Scale, 3> kPoolOrder{Scale::kLocal, Scale::kMiddle, Scale::kGlobal};

}  // namespace detail

/// Estimates T with T * p ~ q for the overlapping part of the clouds.
/// Stage errors surface as RegistrationFailure naming the stage.
inline RegistrationResult register_pair(const PointCloud& p, const PointCloud& q, const PipelineConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  RegistrationResult result;
  detail::Registration run(p, q, cfg, result);
  for (auto s : detail::kPoolOrder) run.process(s);
  const auto pairs = run.pooled({detail::kPoolOrder.begin(), detail::kPoolOrder.end()});
  run.finalize(pairs, run.solve(pairs, run.config().solver));
  result.total_ms = detail::elapsed_ms(start);
  return result;
}

/// Middle scale first with the graph solver; finalizes there when it yields at
/// least tau_n inliers, otherwise continues with all three scales exactly as
/// register_pair does.
inline RegistrationResult register_lite(const PointCloud& p, const PointCloud& q, const PipelineConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  PipelineConfig lite = cfg;
  lite.solver = SolverKind::kKcoreGnc;
  RegistrationResult result;
  detail::Registration run(p, q, lite, result);

  const auto& middle = run.process(Scale::kMiddle);
  if (!middle.empty()) {
    std::optional<SolverReport> report;
    try {
      report = run.solve(middle, SolverKind::kKcoreGnc);
    } catch (const RegistrationFailure& f) {
      // An unusable middle scale simply means no early exit.
      if (f.cause() != ErrorKind::kInsufficientStructure && f.cause() != ErrorKind::kNoHypothesis &&
          f.cause() != ErrorKind::kDegenerate) {
        throw;
      }
    }
    if (report && report->inliers.size() >= static_cast<std::size_t>(lite.tau_n)) {
      run.finalize(middle, *report);
      result.early_exited = true;
      result.total_ms = detail::elapsed_ms(start);
      return result;
    }
  }

  run.process(Scale::kLocal);
  run.process(Scale::kGlobal);
  const auto pairs = run.pooled({detail::kPoolOrder.begin(), detail::kPoolOrder.end()});
  run.finalize(pairs, run.solve(pairs, SolverKind::kKcoreGnc));
  result.total_ms = detail::elapsed_ms(start);
  return result;
}

enum class RegistrationMode { kFull, kLite };

inline std::string to_string(RegistrationMode m) { return m == RegistrationMode::kFull ? "full" : "lite"; }

inline RegistrationMode parse_mode(const std::string& s) {
  if (s == "full") return RegistrationMode::kFull;
  if (s == "lite") return RegistrationMode::kLite;
  throw Error(ErrorKind::kInvalidArgument, "mode must be 'full' or 'lite', got '" + s + "'");
}

inline RegistrationResult register_clouds(const PointCloud& p, const PointCloud& q, const PipelineConfig& cfg,
                                          RegistrationMode mode) {
  return mode == RegistrationMode::kFull ? register_pair(p, q, cfg) : register_lite(p, q, cfg);
}

// Metrics.

/// Rotation error in degrees.
inline double rre(const Mat3& r_gt, const Mat3& r_est) {
  const double c = std::clamp(((r_gt.transpose() * r_est).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::abs(std::acos(c)) * 180.0 / std::numbers::pi;
}

/// Translation error in meters.
inline double rte(const Vec3& t_gt, const Vec3& t_est) { return (t_gt - t_est).norm(); }

inline bool success(double rre_deg, double rte_m, double tau_rot_deg, double tau_trans_m) {
  return rte_m <= tau_trans_m && rre_deg <= tau_rot_deg;
}

struct SuccessThresholds {
  double translation_m = 0.3;
  double rotation_deg = 15.0;

  static SuccessThresholds outdoor() { return {2.0, 5.0}; }
  static SuccessThresholds indoor() { return {0.3, 15.0}; }
};

struct PairMetric {
  double rre_deg = 0.0;
  double rte_m = 0.0;
  bool success = false;
};

inline PairMetric evaluate(const RigidTransform& gt, const RigidTransform& est, const SuccessThresholds& th) {
  PairMetric m;
  m.rre_deg = rre(gt.rotation, est.rotation);
  m.rte_m = rte(gt.translation, est.translation);
  m.success = success(m.rre_deg, m.rte_m, th.rotation_deg, th.translation_m);
  return m;
}

/// Aggregate over pairs; the error means use successful pairs only.
struct MetricReport {
  std::vector<PairMetric> pairs;
  std::size_t successes = 0;
  double success_rate = 0.0;
  double mean_rte_m = 0.0;
  double mean_rre_deg = 0.0;

  static MetricReport from(std::vector<PairMetric> rows) {
    MetricReport r;
    r.pairs = std::move(rows);
    for (const auto& m : r.pairs) {
      if (!m.success) continue;
      ++r.successes;
      r.mean_rte_m += m.rte_m;
      r.mean_rre_deg += m.rre_deg;
    }
    if (r.successes) {
      r.mean_rte_m /= static_cast<double>(r.successes);
      r.mean_rre_deg /= static_cast<double>(r.successes);
    }
    if (!r.pairs.empty()) r.success_rate = static_cast<double>(r.successes) / static_cast<double>(r.pairs.size());
    return r;
  }
};

inline nlohmann::json to_json(const RigidTransform& t) {
  const Mat4 m = t.matrix();
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < 4; ++i) rows.push_back({m(i, 0), m(i, 1), m(i, 2), m(i, 3)});
  return rows;
}

inline nlohmann::json to_json(const RegistrationResult& r) {
  nlohmann::json scales = nlohmann::json::array();
  for (const auto& s : r.scales) {
    nlohmann::json js = {{"scale", to_string(s.scale)},       {"processed", s.processed},
                         {"keypoints_source", s.keypoints_p}, {"keypoints_target", s.keypoints_q},
                         {"dropped_source", s.dropped_p},     {"dropped_target", s.dropped_q},
                         {"matches", s.matches},              {"hypotheses", s.hypotheses}};
    if (!s.note.empty()) js["note"] = s.note;
    scales.push_back(js);
  }
  nlohmann::json timings = nlohmann::json::object();
  for (const auto& t : r.timings) timings[t.stage] = t.ms;
  return {
      {"transform", to_json(r.transform)},
      {"inliers", r.inlier_count},
      {"correspondences", r.correspondences},
      {"voxel_size", r.voxel_size},
      {"radii", {{"local", r.radii.local}, {"middle", r.radii.middle}, {"global", r.radii.global}}},
      {"sphericity", r.sphericity},
      {"spread", r.spread},
      {"branch", r.spheric ? "spheric" : "disc"},
      {"downsampled", {{"source", r.downsampled_p}, {"target", r.downsampled_q}}},
      {"early_exited", r.early_exited},
      {"converged", r.converged},
      {"scales", scales},
      {"timings_ms", timings},
      {"total_ms", r.total_ms},
  };
}

}  // namespace zeroreg
