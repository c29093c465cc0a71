#pragma once

#include "zeroreg/error.hpp"
#include "zeroreg/kdtree.hpp"
#include "zeroreg/rng.hpp"
#include "zeroreg/rotation.hpp"
#include "zeroreg/types.hpp"

#include <Eigen/Eigenvalues>

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace zeroreg {

enum class Scale : int { kLocal = 0, kMiddle = 1, kGlobal = 2 };

inline const char* to_string(Scale s) {
  switch (s) {
    case Scale::kLocal: return "local";
    case Scale::kMiddle: return "middle";
    case Scale::kGlobal: return "global";
  }
  return "?";
}

/// Neighborhood of a keypoint, translated to the keypoint and divided by the
/// radius. `frame` rotates the smallest-variance axis of the neighborhood
/// onto +z.
struct Patch {
  Point3 center = Point3::Zero();
  double radius = 0.0;
  std::vector<Vec3> points;
  Mat3 frame = Mat3::Identity();
  Scale scale = Scale::kMiddle;
};

/// Greedy max-min sampling. Starts at the point farthest from the centroid;
/// ties resolve to the lowest index. Returns min(n, |cloud|) distinct indices.
inline std::vector<std::uint32_t> farthest_point_sampling(const PointCloud& cloud, std::size_t n) {
  if (cloud.empty()) throw Error(ErrorKind::kInsufficientData, "farthest point sampling on an empty cloud");
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "farthest point sampling needs n >= 1");
  const std::size_t m = cloud.size();
  const std::size_t k = std::min(n, m);

  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : cloud.points) centroid += p;
  centroid /= static_cast<double>(m);

  std::vector<double> min_d2(m);
  std::uint32_t current = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d2 = (cloud[i] - centroid).squaredNorm();
    if (d2 > best) {
      best = d2;
      current = static_cast<std::uint32_t>(i);
    }
  }

  std::vector<std::uint32_t> selected;
  selected.reserve(k);
  std::fill(min_d2.begin(), min_d2.end(), std::numeric_limits<double>::infinity());
  while (true) {
    selected.push_back(current);
    if (selected.size() == k) break;
    const Point3 c = cloud[current];
    best = -1.0;
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const double d2 = (cloud[i] - c).squaredNorm();
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > best) {
        best = min_d2[i];
        next = static_cast<std::uint32_t>(i);
      }
    }
    current = next;
  }
  return selected;
}

/// Frame from the covariance of `points` about their mean. The smallest
/// eigenvector is flipped to face `sensor_origin` as seen from `center`
/// (a zero dot product keeps the solver's sign) and then rotated onto +z.
inline Mat3 local_frame(const std::vector<Point3>& points, const Point3& center, const Point3& sensor_origin) {
  if (points.size() < 3) throw Error(ErrorKind::kDegenerate, "local frame needs at least 3 points");
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) {
    const Eigen::Vector3d d = p - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const auto& ev = eig.eigenvalues();  // ascending
  if (!(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2]) {
    throw Error(ErrorKind::kDegenerate, "collinear or coincident neighborhood");
  }
  Vec3 v3 = eig.eigenvectors().col(0).normalized();
  if (v3.dot(sensor_origin - center) < 0.0) v3 = -v3;
  return rodrigues_align(v3);
}

inline Mat3 local_frame(const std::vector<Point3>& points, const Point3& sensor_origin) {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : points) mean += p;
  if (!points.empty()) mean /= static_cast<double>(points.size());
  return local_frame(points, mean, sensor_origin);
}

/// Builds the normalized patch around `center`, or nullopt when fewer than 3
/// neighbors exist or the neighborhood is collinear. The frame uses every
/// neighbor; only the stored points are subsampled to `max_points`.
inline std::optional<Patch> extract_patch(const PointCloud& cloud, const SpatialIndex& index, const Point3& center,
                                          double radius, std::size_t max_points, std::uint64_t seed,
                                          const Point3& sensor_origin = Point3::Zero(),
                                          Scale scale = Scale::kMiddle) {
  if (!(radius > 0.0)) throw Error(ErrorKind::kInvalidArgument, "patch radius must be > 0");
  const auto neighbors = index.radius_search(center, radius);
  if (neighbors.size() < 3) return std::nullopt;

  std::vector<Point3> raw;
  raw.reserve(neighbors.size());
  for (auto i : neighbors) raw.push_back(cloud[i]);

  Patch patch;
  patch.center = center;
  patch.radius = radius;
  patch.scale = scale;
  try {
    patch.frame = local_frame(raw, center, sensor_origin);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kDegenerate) return std::nullopt;
    throw;
  }

  std::vector<std::uint32_t> keep;
  if (raw.size() > max_points) {
    Rng rng(seed);
    keep = sample_indices(raw.size(), max_points, rng);
  } else {
    keep.resize(raw.size());
    std::iota(keep.begin(), keep.end(), 0u);
  }
  const double inv_r = 1.0 / radius;
  patch.points.reserve(keep.size());
  for (auto k : keep) patch.points.push_back((raw[k] - center) * inv_r);
  return patch;
}

}  // namespace zeroreg
