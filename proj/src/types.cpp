#include "grainsim/types.hpp"

#include <algorithm>
#include <cmath>

namespace grainsim {

const char* to_string(MaterialKind k) {
  switch (k) {
    case MaterialKind::Granular: return "granular";
    case MaterialKind::Fluid: return "fluid";
    case MaterialKind::ElastoPlastic: return "elastoplastic";
  }
  return "?";
}

MaterialKind material_kind_from_string(const std::string& s) {
  if (s == "granular") return MaterialKind::Granular;
  if (s == "fluid") return MaterialKind::Fluid;
  if (s == "elastoplastic") return MaterialKind::ElastoPlastic;
  throw ValidationError("unknown material kind '" + s + "'");
}

const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::Scoop: return "scoop";
    case TaskKind::Translate: return "translate";
    case TaskKind::Pour: return "pour";
    case TaskKind::Move: return "move";
  }
  return "?";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "scoop") return TaskKind::Scoop;
  if (s == "translate") return TaskKind::Translate;
  if (s == "pour") return TaskKind::Pour;
  if (s == "move") return TaskKind::Move;
  throw ValidationError("unknown task kind '" + s + "'");
}

std::pair<double, double> lame_from_elastic(double youngs, double poisson) {
  if (!(youngs > 0)) throw std::domain_error("youngs modulus must be > 0");
  if (!(poisson > -1.0) || !(poisson < 0.5))
    throw std::domain_error("poisson ratio must lie in (-1, 0.5)");
  const double mu = youngs / (2.0 * (1.0 + poisson));
  const double lambda =
      youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
  return {mu, lambda};
}

void MaterialParams::derive_lame() {
  auto [m, l] = lame_from_elastic(youngs_modulus, poisson_ratio);
  mu = m;
  lambda = l;
  if (kind == MaterialKind::Fluid) mu = 0.0;
}

void MaterialParams::validate() const {
  if (!(youngs_modulus > 0)) throw ValidationError("material: E must be > 0");
  if (!(poisson_ratio > 0 && poisson_ratio < 0.5))
    throw ValidationError("material: nu must lie in (0, 0.5)");
  if (!(density > 0)) throw ValidationError("material: density must be > 0");
  if (kind == MaterialKind::Granular &&
      !(friction_angle_deg > 0 && friction_angle_deg < 90))
    throw ValidationError("material: friction angle must lie in (0, 90) deg");
  if (kind == MaterialKind::ElastoPlastic && !(yield_stress > 0))
    throw ValidationError("material: yield stress must be > 0");
}

double MaterialParams::dp_alpha() const {
  const double s = std::sin(deg2rad(friction_angle_deg));
  return std::sqrt(2.0 / 3.0) * 2.0 * s / (3.0 - s);
}

MaterialParams MaterialParams::make(MaterialKind kind, double youngs,
                                    double poisson, double friction_deg,
                                    double yield, double density) {
  MaterialParams m;
  m.kind = kind;
  m.youngs_modulus = youngs;
  m.poisson_ratio = poisson;
  m.friction_angle_deg = friction_deg;
  m.yield_stress = yield;
  m.density = density;
  m.derive_lame();
  return m;
}

void ParticleSystem::resize(int n) {
  x.assign(n, Vec3::Zero());
  v.assign(n, Vec3::Zero());
  F.assign(n, Mat3::Identity());
  C.assign(n, Mat3::Zero());
  mass.assign(n, 0.0);
  volume.assign(n, 0.0);
}

double ParticleSystem::total_mass() const {
  double s = 0;
  for (double m : mass) s += m;
  return s;
}

Vec3 ParticleSystem::total_momentum() const {
  Vec3 s = Vec3::Zero();
  for (int i = 0; i < count(); ++i) s += mass[i] * v[i];
  return s;
}

double ParticleSystem::max_speed() const {
  double s = 0;
  for (const Vec3& vi : v) s = std::max(s, vi.squaredNorm());
  return std::sqrt(s);
}

void ParticleSystem::validate() const {
  for (int i = 0; i < count(); ++i) {
    if (!(mass[i] > 0)) throw ValidationError("particle mass must be > 0");
    if (!(volume[i] > 0)) throw ValidationError("particle volume must be > 0");
    if (!(F[i].determinant() > 0))
      throw ValidationError("deformation gradient must have det > 0");
  }
}

void TaskSpec::validate() const {
  if (horizon < 1) throw ValidationError("task: horizon must be >= 1");
  if (!(workspace.lo.array() < workspace.hi.array()).all())
    throw ValidationError("task: workspace box is empty");
  if (!workspace.contains_box(target_region))
    throw ValidationError("task: target region must lie inside the workspace");
  if (downsample < 1) throw ValidationError("task: downsample step must be >= 1");
  if (action_dims != 3 && action_dims != 6)
    throw ValidationError("task: action dims must be 3 or 6");
  if (static_cast<int>(action_min.size()) != action_dims ||
      static_cast<int>(action_max.size()) != action_dims)
    throw ValidationError("task: action bound size mismatch");
  for (int i = 0; i < action_dims; ++i)
    if (!(action_min[i] < action_max[i]))
      throw ValidationError("task: action bounds must satisfy min < max");
  if (observed_count > 0 && elite_count > observed_count)
    throw ValidationError("task: elite count must not exceed observed count");
}

void Trajectory::clamp_to_bounds() {
  const int r = rows();
  for (int t = 0; t < r; ++t) {
    double* a = row(t);
    for (int d = 0; d < dims; ++d) a[d] = std::clamp(a[d], lo[d], hi[d]);
  }
}

bool Trajectory::within_bounds(double tol) const {
  const int r = rows();
  for (int t = 0; t < r; ++t) {
    const double* a = row(t);
    for (int d = 0; d < dims; ++d)
      if (a[d] < lo[d] - tol || a[d] > hi[d] + tol) return false;
  }
  return true;
}

Trajectory Trajectory::zeros(int rows, int dims, const std::vector<double>& lo,
                             const std::vector<double>& hi) {
  Trajectory t;
  t.dims = dims;
  t.actions.assign(size_t(rows) * dims, 0.0);
  t.lo = lo;
  t.hi = hi;
  return t;
}

Vec3 quat_to_euler(const Quat& q) {
  if (std::fabs(q.norm() - 1.0) > 1e-6)
    throw std::domain_error("quat_to_euler requires a unit quaternion");
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  const double sy = std::clamp(2.0 * (w * y - x * z), -1.0, 1.0);
  return Vec3(std::atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y)),
              std::asin(sy),
              std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)));
}

Quat quat_from_euler(const Vec3& rad) {
  const Quat qx(std::cos(0.5 * rad.x()), std::sin(0.5 * rad.x()), 0, 0);
  const Quat qy(std::cos(0.5 * rad.y()), 0, std::sin(0.5 * rad.y()), 0);
  const Quat qz(std::cos(0.5 * rad.z()), 0, 0, std::sin(0.5 * rad.z()));
  return quat_mul(qz, quat_mul(qy, qx)).normalized();
}

}  // namespace grainsim
