#pragma once

#include <cmath>
#include <numbers>

namespace pcsim {

/// 3D point / vector, meters.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }

  double norm2() const { return x * x + y * y + z * z; }
  double norm() const { return std::sqrt(norm2()); }
  double norm2_xy() const { return x * x + y * y; }
  double norm_xy() const { return std::sqrt(norm2_xy()); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

/// Normalize an angle to [-pi, pi).
inline double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0) a += two_pi;
  return a - std::numbers::pi;
}

/// Planar rigid pose with height: (x, y, z, yaw). Yaw-only rotation about z,
/// normalized to [-pi, pi) at construction.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;

  Pose() = default;
  Pose(double x_, double y_, double z_, double yaw_)
      : x(x_), y(y_), z(z_), yaw(normalize_angle(yaw_)) {}

  static Pose identity() { return {}; }

  Vec3 translation() const { return {x, y, z}; }

  /// Apply this pose as a rigid transform to a point.
  Vec3 apply(const Vec3& p) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {c * p.x - s * p.y + x, s * p.x + c * p.y + y, p.z + z};
  }
};

/// Homogeneous-matrix product restricted to yaw-only rotations.
inline Pose pose_compose(const Pose& a, const Pose& b) {
  const double c = std::cos(a.yaw), s = std::sin(a.yaw);
  return Pose(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.z + b.z,
              a.yaw + b.yaw);
}

inline Pose pose_inverse(const Pose& p) {
  const double c = std::cos(p.yaw), s = std::sin(p.yaw);
  // R(-yaw) * (-t)
  return Pose(-(c * p.x + s * p.y), -(-s * p.x + c * p.y), -p.z, -p.yaw);
}

/// Pose of `other` expressed in the frame of `ego`: ego^{-1} o other.
inline Pose relative_pose(const Pose& ego, const Pose& other) {
  return pose_compose(pose_inverse(ego), other);
}

/// 3D box with yaw-only orientation. `length` runs along the local x axis
/// (heading), `width` along local y, `height` along z.
struct OrientedBox {
  Vec3 center;
  double height = 1.0;
  double width = 1.0;
  double length = 1.0;
  double yaw = 0.0;
  double confidence = 1.0;

  /// Footprint corners in the world xy plane, counter-clockwise.
  void footprint(double cx[4], double cy[4]) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double hl = 0.5 * length, hw = 0.5 * width;
    const double lx[4] = {hl, -hl, -hl, hl};
    const double ly[4] = {hw, hw, -hw, -hw};
    for (int i = 0; i < 4; ++i) {
      cx[i] = center.x + c * lx[i] - s * ly[i];
      cy[i] = center.y + s * lx[i] + c * ly[i];
    }
  }

  /// Closed-boundary containment test against the 2D footprint.
  bool contains_xy(const Vec3& p, double inflate = 0.0) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double dx = p.x - center.x, dy = p.y - center.y;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    return std::abs(lx) <= 0.5 * length + inflate &&
           std::abs(ly) <= 0.5 * width + inflate;
  }

  /// Containment within the full 3D extent (closed boundary).
  bool contains(const Vec3& p, double inflate = 0.0) const {
    return contains_xy(p, inflate) &&
           std::abs(p.z - center.z) <= 0.5 * height + inflate;
  }
};

inline OrientedBox transform_box(const OrientedBox& b, const Pose& t) {
  OrientedBox out = b;
  out.center = t.apply(b.center);
  out.yaw = normalize_angle(b.yaw + t.yaw);
  return out;
}

}  // namespace pcsim
