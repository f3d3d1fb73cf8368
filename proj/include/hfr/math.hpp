#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <numbers>

namespace hfr {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

using Vec3f = Eigen::Vector3f;
using Vec4f = Eigen::Vector4f;

inline constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

inline Vec3 transform_point(const Mat4& m, const Vec3& p) {
  return m.topLeftCorner<3, 3>() * p + m.topRightCorner<3, 1>();
}

inline Vec3 transform_dir(const Mat4& m, const Vec3& d) { return m.topLeftCorner<3, 3>() * d; }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Rotation matrix of a (w, x, y, z) quaternion; the input need not be normalized.
inline Mat3 quat_to_matrix(const Vec4& q) {
  const Vec4 n = q / q.norm();
  const double w = n[0], x = n[1], y = n[2], z = n[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

// Rigid transform looking from `eye` toward `target`. Camera convention: -Z forward, +Y up.
inline Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint = Vec3::UnitY()) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 up = up_hint;
  if (std::abs(forward.dot(up.normalized())) > 0.999) up = std::abs(forward.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 true_up = right.cross(forward);
  Mat4 pose = Mat4::Identity();
  pose.block<3, 1>(0, 0) = right;
  pose.block<3, 1>(0, 1) = true_up;
  pose.block<3, 1>(0, 2) = -forward;
  pose.block<3, 1>(0, 3) = eye;
  return pose;
}

}  // namespace hfr
