#pragma once

// Small generators shared by the test binaries.

#include "zeroreg/zeroreg.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace zeroreg::testing {

inline double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
inline double rad(double deg) { return deg * std::numbers::pi / 180.0; }

inline Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

inline Mat3 random_rotation(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline RigidTransform random_transform(Rng& rng, double max_t = 1.0) {
  std::uniform_real_distribution<double> u(-max_t, max_t);
  return {random_rotation(rng), Vec3(u(rng), u(rng), u(rng))};
}

inline PointCloud uniform_box(Rng& rng, std::size_t n, const Vec3& lo, const Vec3& hi) {
  PointCloud c;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    c.points.emplace_back(lo.x() + (hi.x() - lo.x()) * u(rng), lo.y() + (hi.y() - lo.y()) * u(rng),
                          lo.z() + (hi.z() - lo.z()) * u(rng));
  }
  return c;
}

inline PointCloud unit_cube(Rng& rng, std::size_t n) { return uniform_box(rng, n, Vec3::Zero(), Vec3::Ones()); }

// Points on the surface of an axis-aligned box centered at the origin.
inline PointCloud box_surface(Rng& rng, std::size_t n, const Vec3& half) {
  PointCloud c;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> face(0, 5);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 p(u(rng) * half.x(), u(rng) * half.y(), u(rng) * half.z());
    const int f = face(rng);
    p[f / 2] = (f % 2 ? 1.0 : -1.0) * half[f / 2];
    c.points.push_back(p);
  }
  return c;
}

// Thin, wide slab: a LiDAR-like disc.
inline PointCloud disc_cloud(Rng& rng, std::size_t n, double radius, double thickness) {
  PointCloud c;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = radius * std::sqrt(u(rng));
    const double a = 2.0 * std::numbers::pi * u(rng);
    c.points.emplace_back(r * std::cos(a), r * std::sin(a), thickness * (u(rng) - 0.5));
  }
  return c;
}

inline double rotation_error_deg(const Mat3& a, const Mat3& b) { return rre(a, b); }

// Exact-inlier correspondences under `t` followed by uniform outliers.
inline CorrespondenceSet planted_pairs(Rng& rng, const RigidTransform& t, std::size_t inliers, std::size_t outliers,
                                       double noise = 0.0, double extent = 5.0) {
  CorrespondenceSet cs;
  std::uniform_real_distribution<double> u(-extent, extent);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < inliers; ++i) {
    const Point3 p(u(rng), u(rng), u(rng));
    const Point3 q = t * p + noise * Vec3(g(rng), g(rng), g(rng));
    cs.push_back(p, q, t, Scale::kMiddle);
  }
  for (std::size_t i = 0; i < outliers; ++i) {
    cs.push_back(Point3(u(rng), u(rng), u(rng)), Point3(u(rng), u(rng), u(rng)), RigidTransform{}, Scale::kMiddle);
  }
  return cs;
}

// Unique scratch path under the system temp directory.
inline std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "zeroreg_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace zeroreg::testing
