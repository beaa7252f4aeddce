#include <algorithm>
#include <cmath>
#include <limits>

#include "grainsim/types.hpp"

namespace grainsim {
namespace {

double box_dist(const Vec3& p, const Vec3& c, const Vec3& h) {
  const Vec3 q = (p - c).cwiseAbs() - h;
  const Vec3 qp = q.cwiseMax(0.0);
  const double outside = qp.norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return outside + inside;
}

Vec3 box_normal(const Vec3& p, const Vec3& c, const Vec3& h) {
  const Vec3 d = p - c;
  const Vec3 q = d.cwiseAbs() - h;
  if ((q.array() > 0).any()) {
    Vec3 g = Vec3::Zero();
    for (int k = 0; k < 3; ++k)
      if (q[k] > 0) g[k] = (d[k] > 0 ? q[k] : -q[k]);
    const double n = g.norm();
    return n > 0 ? Vec3(g / n) : Vec3::UnitY();
  }
  // interior: face of the least-deep axis
  int k = 0;
  q.maxCoeff(&k);
  Vec3 g = Vec3::Zero();
  g[k] = d[k] >= 0 ? 1.0 : -1.0;
  return g;
}

double capsule_dist(const Vec3& p, const Vec3& a, const Vec3& b, double r) {
  const Vec3 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / std::max(ab.squaredNorm(), 1e-300), 0.0, 1.0);
  return (p - (a + t * ab)).norm() - r;
}

Vec3 capsule_normal(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / std::max(ab.squaredNorm(), 1e-300), 0.0, 1.0);
  const Vec3 d = p - (a + t * ab);
  const double n = d.norm();
  return n > 1e-12 ? Vec3(d / n) : Vec3::UnitY();
}

// Spherical shell cut to the angular band [open_angle, 180deg] measured
// from the axis; the rim is the rounded edge of the band, so the signed
// distance is exact everywhere: angular interior -> radial distance to
// the mid surface, otherwise distance to the rim ring; thickness/2 is
// subtracted in both cases.
void shell_eval(const SdfPrim& s, const Vec3& p, double* dist, Vec3* normal) {
  const Vec3 w = p - s.center;
  const double y = w.dot(s.axis);
  const Vec3 radial = w - y * s.axis;
  const double rho = radial.norm();
  const double r = w.norm();
  const double th0 = deg2rad(s.open_angle_deg);
  const double phi = std::atan2(rho, y);  // [0, pi] angle from axis
  if (phi >= th0) {
    const double d = std::fabs(r - s.radius) - 0.5 * s.thickness;
    if (dist) *dist = d;
    if (normal) {
      Vec3 u = r > 1e-12 ? Vec3(w / r) : s.axis;
      *normal = (r >= s.radius ? u : Vec3(-u));
    }
    return;
  }
  const Vec3 rho_hat = rho > 1e-12 ? Vec3(radial / rho) : [&] {
    // on the axis: any perpendicular direction works
    Vec3 t = std::fabs(s.axis.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    return Vec3((t - t.dot(s.axis) * s.axis).normalized());
  }();
  const double rim_rho = s.radius * std::sin(th0);
  const double rim_y = s.radius * std::cos(th0);
  const Vec3 m = (rho - rim_rho) * rho_hat + (y - rim_y) * s.axis;
  const double md = m.norm();
  if (dist) *dist = md - 0.5 * s.thickness;
  if (normal) *normal = md > 1e-12 ? Vec3(m / md) : rho_hat;
}

}  // namespace

double SdfPrim::dist(const Vec3& p) const {
  switch (kind) {
    case PrimKind::HalfSpace:
      return normal_dir.dot(p) - offset;
    case PrimKind::Box:
      return box_dist(p, center, half);
    case PrimKind::Capsule:
      return capsule_dist(p, a, b, radius);
    case PrimKind::ShellSegment: {
      double d;
      shell_eval(*this, p, &d, nullptr);
      return d;
    }
  }
  return std::numeric_limits<double>::infinity();
}

Vec3 SdfPrim::normal(const Vec3& p) const {
  switch (kind) {
    case PrimKind::HalfSpace:
      return normal_dir;
    case PrimKind::Box:
      return box_normal(p, center, half);
    case PrimKind::Capsule:
      return capsule_normal(p, a, b);
    case PrimKind::ShellSegment: {
      Vec3 n;
      shell_eval(*this, p, nullptr, &n);
      return n;
    }
  }
  return Vec3::UnitY();
}

double SdfSet::dist(const Vec3& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const SdfPrim& s : prims) d = std::min(d, s.dist(p));
  return d;
}

std::pair<double, Vec3> SdfSet::eval(const Vec3& p) const {
  double best = std::numeric_limits<double>::infinity();
  double second = best;
  const SdfPrim* arg = nullptr;
  for (const SdfPrim& s : prims) {
    const double d = s.dist(p);
    if (d < best) {
      second = best;
      best = d;
      arg = &s;
    } else if (d < second) {
      second = d;
    }
  }
  if (!arg) return {best, Vec3::UnitY()};
  if (prims.size() > 1 && second - best < 1e-7) {
    // union seam: central difference of the combined field
    const double h = 1e-6;
    Vec3 g;
    for (int k = 0; k < 3; ++k) {
      Vec3 e = Vec3::Zero();
      e[k] = h;
      g[k] = (dist(p + e) - dist(p - e)) / (2 * h);
    }
    const double n = g.norm();
    if (n > 1e-9) return {best, g / n};
  }
  return {best, arg->normal(p)};
}

std::pair<double, Vec3> ToolState::sdf(const Vec3& x) const {
  const Mat3 r = orientation.rotation();
  const Vec3 local = r.transpose() * (x - position);
  auto [d, n] = shape->eval(local);
  return {d, r * n};
}

}  // namespace grainsim
