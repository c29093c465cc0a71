#pragma once

// Scene-adaptive voxel size and per-scale search radii.

#include "zeroreg/config.hpp"
#include "zeroreg/error.hpp"
#include "zeroreg/kdtree.hpp"
#include "zeroreg/parallel.hpp"
#include "zeroreg/rng.hpp"
#include "zeroreg/types.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>

namespace zeroreg {

/// PCA summary of a point set. Eigenvalues descend; `spread` is the extent of
/// the points along the smallest-variance axis.
struct SceneShape {
  Eigen::Vector3d eigenvalues = Eigen::Vector3d::Zero();
  Mat3 eigenvectors = Mat3::Identity();  // column a pairs with eigenvalues[a]
  double sphericity = 0.0;
  double spread = 0.0;
};

struct ScaleRadii {
  double local = 0.0;
  double middle = 0.0;
  double global = 0.0;

  double operator[](int scale) const { return scale == 0 ? local : scale == 1 ? middle : global; }
};

struct VoxelEstimate {
  SceneShape shape;
  bool spheric = false;
  double voxel_size = 0.0;
};

namespace detail {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 19349669ULL;
    h ^= static_cast<std::uint64_t>(k.z) * 83492791ULL;
    return static_cast<std::size_t>(mix_seed(h, 0));
  }
};

inline VoxelKey voxel_key(const Point3& p, double v) {
  return {static_cast<std::int64_t>(std::floor(p.x() / v)), static_cast<std::int64_t>(std::floor(p.y() / v)),
          static_cast<std::int64_t>(std::floor(p.z() / v))};
}

}  // namespace detail

/// One centroid per occupied voxel of edge `v`, grid anchored at the origin.
/// Output order follows first occupancy in the input.
inline PointCloud voxel_downsample(const PointCloud& cloud, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorKind::kInvalidArgument, "voxel size must be > 0");
  std::unordered_map<detail::VoxelKey, std::uint32_t, detail::VoxelKeyHash> slots;
  slots.reserve(cloud.size());
  std::vector<Eigen::Vector3d> sums;
  std::vector<std::uint32_t> counts;
  for (const auto& p : cloud.points) {
    auto [it, inserted] = slots.try_emplace(detail::voxel_key(p, v), static_cast<std::uint32_t>(sums.size()));
    if (inserted) {
      sums.push_back(p);
      counts.push_back(1);
    } else {
      sums[it->second] += p;
      ++counts[it->second];
    }
  }
  PointCloud out;
  out.source = cloud.source;
  out.points.reserve(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) out.points.push_back(sums[i] / counts[i]);
  return out;
}

/// PCA of an explicit point set.
inline SceneShape shape_of(const std::vector<Point3>& pts) {
  if (pts.size() < 3) throw Error(ErrorKind::kInsufficientData, "scene shape needs at least 3 points");
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector3d d = p - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(pts.size());

  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  SceneShape shape;
  // Eigen sorts ascending; flip to descending.
  for (int a = 0; a < 3; ++a) {
    shape.eigenvalues[a] = std::max(0.0, eig.eigenvalues()[2 - a]);
    shape.eigenvectors.col(a) = eig.eigenvectors().col(2 - a);
  }
  shape.sphericity = shape.eigenvalues[0] < 1e-12 ? 0.0 : shape.eigenvalues[2] / shape.eigenvalues[0];
  const Eigen::Vector3d v3 = shape.eigenvectors.col(2);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : pts) {
    const double s = p.dot(v3);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  shape.spread = hi - lo;
  return shape;
}

/// PCA of a uniform `fraction` sample (at least 3 points) of `cloud`.
inline SceneShape scene_shape(const PointCloud& cloud, double fraction, std::uint64_t seed) {
  if (cloud.size() < 3) throw Error(ErrorKind::kInsufficientData, "scene shape needs at least 3 points");
  const auto wanted = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cloud.size())));
  const std::size_t k = std::min(cloud.size(), std::max<std::size_t>(3, wanted));
  Rng rng(seed);
  std::vector<Point3> sample;
  sample.reserve(k);
  for (auto i : sample_indices(cloud.size(), k, rng)) sample.push_back(cloud[i]);
  return shape_of(sample);
}

inline const PointCloud& larger_cloud(const PointCloud& p, const PointCloud& q) {
  return q.size() > p.size() ? q : p;
}

inline VoxelEstimate voxel_size_from_shape(const SceneShape& shape, const PipelineConfig& cfg) {
  VoxelEstimate est;
  est.shape = shape;
  est.spheric = shape.sphericity >= cfg.tau_v;
  est.voxel_size = (est.spheric ? cfg.kappa_spheric : cfg.kappa_disc) * std::sqrt(shape.spread);
  return est;
}

inline VoxelEstimate estimate_voxel(const PointCloud& p, const PointCloud& q, const PipelineConfig& cfg) {
  return voxel_size_from_shape(scene_shape(larger_cloud(p, q), cfg.delta_v, mix_seed(cfg.seed, 0x766f78)), cfg);
}

/// kappa * sqrt(spread), with kappa picked by the sphericity branch.
inline double estimate_voxel_size(const PointCloud& p, const PointCloud& q, const PipelineConfig& cfg) {
  return estimate_voxel(p, q, cfg).voxel_size;
}

/// Mean neighbor fraction of a query set against itself as a function of the
/// ball radius. Counts are summed as integers, so results do not depend on
/// evaluation order.
class NeighborDensity {
 public:
  NeighborDensity(std::vector<Point3> sample, int threads)
      : pts_(std::move(sample)), index_(pts_), threads_(threads) {
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      for (std::size_t j = i + 1; j < pts_.size(); ++j) {
        const double d = (pts_[i] - pts_[j]).norm();
        if (d > 0.0) min_distance_ = std::min(min_distance_, d);
        max_distance_ = std::max(max_distance_, d);
      }
    }
  }
  NeighborDensity(const NeighborDensity&) = delete;
  NeighborDensity& operator=(const NeighborDensity&) = delete;

  std::size_t size() const { return pts_.size(); }
  const std::vector<Point3>& points() const { return pts_; }

  double fraction(double r) const {
    std::vector<std::size_t> counts(pts_.size());
    parallel_for(pts_.size(), threads_, [&](std::size_t i) { counts[i] = index_.radius_count(pts_[i], r); });
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    const double n = static_cast<double>(pts_.size());
    return static_cast<double>(total) / (n * n);
  }

  /// Smallest nonzero and largest pairwise distances of the sample.
  std::pair<double, double> distance_range() const { return {min_distance_, max_distance_}; }

 private:
  std::vector<Point3> pts_;
  SpatialIndex index_;
  int threads_;
  double min_distance_ = std::numeric_limits<double>::infinity();
  double max_distance_ = 0.0;
};

/// Smallest radius (to `rel_tol`) whose neighbor fraction is closest to `tau`,
/// searched over [smallest, largest] pairwise distance. Exploits monotonicity of
/// the fraction in r with two bisections: one locates the step where the
/// fraction reaches tau, the other the start of the winning plateau.
inline double radius_for_density(const NeighborDensity& density, double tau, double rel_tol = 1e-4) {
  const auto [r_min, r_max] = density.distance_range();
  if (!(r_max > 0.0)) throw Error(ErrorKind::kInsufficientData, "radius estimation needs two distinct points");

  // Bracket [lo, hi] of width <= rel_tol * hi around the first r in [lo0, hi0]
  // with fraction(r) >= target; fraction(hi0) >= target is assumed.
  auto bracket = [&](double target, double lo0, double hi0) -> std::pair<double, double> {
    if (density.fraction(lo0) >= target) return {lo0, lo0};
    double lo = lo0, hi = hi0;
    while (hi - lo > rel_tol * hi) {
      const double mid = 0.5 * (lo + hi);
      if (density.fraction(mid) >= target) hi = mid;
      else lo = mid;
    }
    return {lo, hi};
  };

  const auto [lo, hi] = bracket(tau, r_min, r_max);
  if (lo == hi) return hi;
  const double f_lo = density.fraction(lo);
  const double f_hi = density.fraction(hi);
  if (std::abs(f_lo - tau) <= std::abs(f_hi - tau)) return bracket(f_lo, r_min, lo).second;
  return hi;
}

/// Per-scale radii from target neighbor fractions, capped at r_max.
inline ScaleRadii estimate_radii(const PointCloud& cloud, const PipelineConfig& cfg, std::uint64_t seed) {
  if (cloud.empty()) throw Error(ErrorKind::kInsufficientData, "radius estimation on an empty cloud");
  Rng rng(seed);
  std::vector<Point3> sample;
  for (auto i : sample_indices(cloud.size(), static_cast<std::size_t>(cfg.n_r), rng)) sample.push_back(cloud[i]);
  NeighborDensity density(std::move(sample), cfg.threads);
  ScaleRadii radii;
  radii.local = std::min(radius_for_density(density, cfg.tau_l), cfg.r_max);
  radii.middle = std::min(radius_for_density(density, cfg.tau_m), cfg.r_max);
  radii.global = std::min(radius_for_density(density, cfg.tau_g), cfg.r_max);
  return radii;
}

}  // namespace zeroreg
