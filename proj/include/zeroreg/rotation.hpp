#pragma once

#include "zeroreg/error.hpp"
#include "zeroreg/types.hpp"

#include <numbers>

namespace zeroreg {

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

/// Rotation taking the unit vector `v` onto +z via Rodrigues' formula about
/// the normalized axis v x z. v ~ -z resolves to a half turn about +x.
inline Mat3 rodrigues_align(const Vec3& v) {
  if (!v.allFinite() || std::abs(v.norm() - 1.0) > 1e-9) {
    throw Error(ErrorKind::kInvalidArgument, "rodrigues_align expects a finite unit vector");
  }
  const Vec3 z = Vec3::UnitZ();
  const Vec3 axis = v.cross(z);
  const double sin_theta = axis.norm();
  const double cos_theta = std::clamp(v.dot(z), -1.0, 1.0);

  if (sin_theta < 1e-8) {
    if (cos_theta > 0.0) return Mat3::Identity();
    return Eigen::AngleAxisd(std::numbers::pi, Vec3::UnitX()).toRotationMatrix();
  }
  const double theta = std::atan2(sin_theta, cos_theta);
  if (theta < 1e-8) return Mat3::Identity();

  const Mat3 k = skew(axis / sin_theta);
  return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

/// Rotation about z by 2*pi*offset/sectors.
inline Mat3 yaw_rotation(double offset, int sectors) {
  if (sectors < 2) throw Error(ErrorKind::kInvalidArgument, "yaw_rotation needs at least 2 sectors");
  if (!std::isfinite(offset)) throw Error(ErrorKind::kInvalidArgument, "yaw offset is not finite");
  // Reduce first so that offsets differing by a full period give the same matrix.
  const double reduced = offset - sectors * std::floor(offset / sectors);
  const double angle = 2.0 * std::numbers::pi * reduced / sectors;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Mat3 r;
  r << c, -s, 0.0,
       s, c, 0.0,
       0.0, 0.0, 1.0;
  return r;
}

inline Mat3 rotation_z(double radians) {
  return Eigen::AngleAxisd(radians, Vec3::UnitZ()).toRotationMatrix();
}

/// True when R^T R = I and det R = +1 within `tol` (Frobenius / absolute).
inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return r.allFinite() && (r.transpose() * r - Mat3::Identity()).norm() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

/// compose(a, b) applies b first, then a.
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline RigidTransform inverse(const RigidTransform& t) {
  const Mat3 rt = t.rotation.transpose();
  return {rt, -rt * t.translation};
}

inline PointCloud apply(const RigidTransform& t, const PointCloud& cloud) {
  PointCloud out;
  out.source = cloud.source;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(t * p);
  return out;
}

}  // namespace zeroreg
