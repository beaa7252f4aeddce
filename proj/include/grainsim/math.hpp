#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace grainsim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec3i = Eigen::Vector3i;

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// Wrap an angle difference in degrees to (-180, 180].
inline double wrap_deg(double d) {
  d = std::fmod(d, 360.0);
  if (d <= -180.0) d += 360.0;
  if (d > 180.0) d -= 360.0;
  return d;
}

inline Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0, -w.z(), w.y(),
       w.z(), 0, -w.x(),
       -w.y(), w.x(), 0;
  return m;
}

inline Vec3 axial(const Mat3& m) {
  // inverse of skew() for a skew-symmetric matrix
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

// Unit quaternion, stored (w, x, y, z). Kept as a plain struct so the
// adjoint code can treat the four components as ordinary parameters.
struct Quat {
  double w = 1, x = 0, y = 0, z = 0;

  Quat() = default;
  Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quat normalized() const {
    const double n = norm();
    return Quat(w / n, x / n, y / n, z / n);
  }

  static Quat identity() { return Quat(); }

  Mat3 rotation() const {
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
  }

  Vec3 rotate(const Vec3& v) const { return rotation() * v; }
  Vec3 rotate_inv(const Vec3& v) const { return rotation().transpose() * v; }
};

inline Quat quat_mul(const Quat& a, const Quat& b) {
  return Quat(a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
              a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
              a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
              a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w);
}

/// Quaternion for a rotation of |u| radians about u/|u|; smooth at u = 0.
inline Quat quat_from_rotvec(const Vec3& u) {
  const double th = u.norm();
  double c, s;  // s = sin(th/2)/th
  if (th < 1e-8) {
    c = 1.0 - th * th / 8.0;
    s = 0.5 - th * th / 48.0;
  } else {
    c = std::cos(0.5 * th);
    s = std::sin(0.5 * th) / th;
  }
  return Quat(c, s * u.x(), s * u.y(), s * u.z());
}

/// Derivatives of the rotation matrix w.r.t. the four quaternion
/// components (treating them as free parameters; normalization is a
/// separate step with its own adjoint).
inline void quat_rotation_derivs(const Quat& q, Mat3 d[4]) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  d[0] << 0, -2 * z, 2 * y,
          2 * z, 0, -2 * x,
          -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z,
          2 * y, -4 * x, -2 * w,
          2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w,
          2 * x, 0, 2 * z,
          -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x,
          2 * w, -4 * z, 2 * y,
          2 * x, 2 * y, 0;
}

/// Euler angles from a quaternion exactly as used by the chaining
/// objective: x = atan2(2(wx+yz), 1-2(x^2+y^2)), y = asin(2(wy-xz))
/// clamped, z = atan2(2(wz+xy), 1-2(y^2+z^2)). Radians.
Vec3 quat_to_euler(const Quat& q);

/// Inverse construction (z * y * x order), used by scene files and the
/// round-trip oracle.
Quat quat_from_euler(const Vec3& rad);

inline bool finite(const Vec3& v) { return v.allFinite(); }
inline bool finite(const Mat3& m) { return m.allFinite(); }

struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
  bool contains(const Vec3& p) const {
    return p.x() >= lo.x() && p.x() <= hi.x() && p.y() >= lo.y() &&
           p.y() <= hi.y() && p.z() >= lo.z() && p.z() <= hi.z();
  }
  bool contains_box(const Box& b) const {
    return contains(b.lo) && contains(b.hi);
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
};

}  // namespace grainsim
