#include "grainsim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace grainsim {

void Grid::resize(int cells) {
  n = cells;
  dx = 1.0 / cells;
  mass.assign(size_t(nodes()) * nodes() * nodes(), 0.0);
  vel.assign(size_t(nodes()) * nodes() * nodes(), Vec3::Zero());
}

void Grid::activate(const ParticleSystem& ps, int pad) {
  Vec3 mn = Vec3::Constant(1e30), mx = Vec3::Constant(-1e30);
  for (const Vec3& x : ps.x) {
    mn = mn.cwiseMin(x);
    mx = mx.cwiseMax(x);
  }
  const double inv_dx = 1.0 / dx;
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::clamp(int(std::floor(mn[a] * inv_dx - 0.5)) - pad + 1, 0, n);
    hi[a] = std::clamp(int(std::floor(mx[a] * inv_dx - 0.5)) + 2 + pad, 0, n);
  }
  for (int i = lo.x(); i <= hi.x(); ++i)
    for (int j = lo.y(); j <= hi.y(); ++j) {
      const size_t row = idx(i, j, lo.z());
      std::memset(mass.data() + row, 0, sizeof(double) * (hi.z() - lo.z() + 1));
      for (int k = lo.z(); k <= hi.z(); ++k) vel[row + (k - lo.z())].setZero();
    }
}

double Grid::total_mass() const {
  double s = 0;
  for (int i = lo.x(); i <= hi.x(); ++i)
    for (int j = lo.y(); j <= hi.y(); ++j)
      for (int k = lo.z(); k <= hi.z(); ++k) s += mass[idx(i, j, k)];
  return s;
}

Vec3 Grid::total_momentum() const {
  Vec3 s = Vec3::Zero();
  for (int i = lo.x(); i <= hi.x(); ++i)
    for (int j = lo.y(); j <= hi.y(); ++j)
      for (int k = lo.z(); k <= hi.z(); ++k) s += vel[idx(i, j, k)];
  return s;
}

Stencil make_stencil(const Vec3& x, double inv_dx) {
  Stencil s;
  for (int a = 0; a < 3; ++a) {
    const double xs = x[a] * inv_dx;
    s.base[a] = int(std::floor(xs - 0.5));
    const double fx = xs - s.base[a];
    s.fx[a] = fx;
    s.w[a][0] = 0.5 * (1.5 - fx) * (1.5 - fx);
    s.w[a][1] = 0.75 - (fx - 1.0) * (fx - 1.0);
    s.w[a][2] = 0.5 * (fx - 0.5) * (fx - 0.5);
    s.dw[a][0] = fx - 1.5;
    s.dw[a][1] = -2.0 * (fx - 1.0);
    s.dw[a][2] = fx - 0.5;
  }
  return s;
}

void svd3(const Mat3& f, Mat3& u, Vec3& sigma, Mat3& v) {
  Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  u = svd.matrixU();
  v = svd.matrixV();
  sigma = svd.singularValues();
  if (u.determinant() < 0) {
    // det(F) > 0 means U and V flip together; restore proper rotations
    u.col(2) *= -1.0;
    v.col(2) *= -1.0;
  }
}

Mat3 corotated_stress(const Mat3& f, double mu, double lambda) {
  const double j = f.determinant();
  if (mu == 0.0)  // fluid: equation-of-state pressure only
    return Mat3::Identity() * (lambda * (j - 1.0) * j);
  Mat3 u, v;
  Vec3 sig;
  svd3(f, u, sig, v);
  const Mat3 r = u * v.transpose();
  return 2.0 * mu * (f - r) * f.transpose() +
         Mat3::Identity() * (lambda * (j - 1.0) * j);
}

Mat3 apply_plasticity(const Mat3& f, const MaterialParams& mat) {
  if (mat.kind == MaterialKind::Fluid) {
    const double j = f.determinant();
    return Mat3::Identity() * std::cbrt(j);
  }
  Mat3 u, v;
  Vec3 sig;
  svd3(f, u, sig, v);
  const Vec3 eps = sig.array().log();
  const double tr = eps.sum();
  const Vec3 dev = eps - Vec3::Constant(tr / 3.0);
  const double dev_norm = dev.norm();

  if (mat.kind == MaterialKind::Granular) {
    if (tr > 0.0 || dev_norm < 1e-14) return u * v.transpose();  // tip
    const double dg = dev_norm + mat.dp_alpha() *
                                     (3.0 * mat.lambda + 2.0 * mat.mu) /
                                     (2.0 * mat.mu) * tr;
    if (dg <= 0.0) return f;  // inside the cone
    const Vec3 proj = eps - (dg / dev_norm) * dev;
    return u * proj.array().exp().matrix().asDiagonal() * v.transpose();
  }

  // von Mises: clamp the deviatoric log strain at sigma_Y / (2 mu)
  const double dg = dev_norm - mat.yield_stress / (2.0 * mat.mu);
  if (dg <= 0.0) return f;
  const Vec3 proj = eps - (dg / dev_norm) * dev;
  return u * proj.array().exp().matrix().asDiagonal() * v.transpose();
}

double dp_yield(const Mat3& sigma, const MaterialParams& mat) {
  const double d = 3.0;
  const double tr = sigma.trace();
  const Mat3 dev = sigma - Mat3::Identity() * (tr / d);
  return dev.norm() +
         (d * mat.lambda + 2.0 * mat.mu) / (2.0 * mat.mu) * tr * mat.dp_alpha();
}

Mat3 hencky_stress(const Mat3& f, const MaterialParams& mat) {
  Mat3 u, v;
  Vec3 sig;
  svd3(f, u, sig, v);
  const Vec3 eps = sig.array().log();
  const Vec3 s = 2.0 * mat.mu * eps + Vec3::Constant(mat.lambda * eps.sum());
  return s.asDiagonal();
}

void p2g(const ParticleSystem& ps, const MaterialParams& mat, Grid& grid,
         double dt) {
  const double inv_dx = 1.0 / grid.dx;
  const double stress_k = -dt * 4.0 * inv_dx * inv_dx;
  const int np = ps.count();
  for (int p = 0; p < np; ++p) {
    const Stencil st = make_stencil(ps.x[p], inv_dx);
    if ((st.base.array() < 0).any() || (st.base.array() + 2 > grid.n).any())
      throw StepError("p2g: particle " + std::to_string(p) +
                          " left the grid support",
                      p);
    const Mat3 kirchhoff = corotated_stress(ps.F[p], mat.mu, mat.lambda);
    if (!finite(kirchhoff))
      throw StepError("p2g: non-finite stress at particle " + std::to_string(p), p);
    const Mat3 affine = stress_k * ps.volume[p] * kirchhoff + ps.mass[p] * ps.C[p];
    const Vec3 mv = ps.mass[p] * ps.v[p];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double wij = st.w[0][i] * st.w[1][j];
        for (int k = 0; k < 3; ++k) {
          const Vec3 dpos =
              (Vec3(st.base.x() + i, st.base.y() + j, st.base.z() + k) -
               ps.x[p] * inv_dx) *
              grid.dx;
          const double w = wij * st.w[2][k];
          const size_t n = grid.idx(st.base.x() + i, st.base.y() + j, st.base.z() + k);
          grid.mass[n] += w * ps.mass[p];
          grid.vel[n] += w * (mv + affine * dpos);
        }
      }
  }
}

Vec3 collide_velocity(const Collider& c, const Vec3& node_x, const Vec3& v_in) {
  auto [d, n] = c.sdf(node_x);
  if (d > c.margin) return v_in;
  const Vec3 v_tool = c.velocity_at(node_x);
  const Vec3 rel = v_in - v_tool;
  const double vn = n.dot(rel);
  if (vn >= 0.0) return v_in;  // separating
  const Vec3 tang = rel - vn * n;
  const double tl = tang.norm();
  if (tl <= 1e-12) return v_tool;
  const double kappa = std::max(0.0, 1.0 + c.friction * vn / tl);
  return v_tool + kappa * tang;
}

void grid_update(Grid& grid, const StepContext& ctx, const Collider* tool,
                 const Collider* container, const Box& workspace) {
  const Vec3 g_dt = ctx.gravity * ctx.dt;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (ctx.parallel)
#endif
  for (int i = grid.lo.x(); i <= grid.hi.x(); ++i)
    for (int j = grid.lo.y(); j <= grid.hi.y(); ++j)
      for (int k = grid.lo.z(); k <= grid.hi.z(); ++k) {
        const size_t n = grid.idx(i, j, k);
        const double m = grid.mass[n];
        if (m <= 0.0) {
          grid.vel[n].setZero();
          continue;
        }
        Vec3 v = grid.vel[n] / m + g_dt;
        const Vec3 p = grid.node_pos(i, j, k);
        if (container) v = collide_velocity(*container, p, v);
        if (tool) v = collide_velocity(*tool, p, v);
        // domain boundaries win over colliders (nothing passes the walls)
        if (p.y() <= workspace.lo.y()) {
          if (v.y() < 0.0) v.setZero();  // sticky floor
        } else {
          for (int a = 0; a < 3; ++a) {  // free-slip walls and ceiling
            if (p[a] <= workspace.lo[a] && v[a] < 0.0) v[a] = 0.0;
            if (p[a] >= workspace.hi[a] && v[a] > 0.0) v[a] = 0.0;
          }
        }
        grid.vel[n] = v;
      }
}

void g2p(const Grid& grid, ParticleSystem& ps, const MaterialParams& mat,
         double dt, bool parallel) {
  const double inv_dx = 1.0 / grid.dx;
  const int np = ps.count();
  int bad = -1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
  for (int p = 0; p < np; ++p) {
    const Stencil st = make_stencil(ps.x[p], inv_dx);
    Vec3 v = Vec3::Zero();
    Mat3 c = Mat3::Zero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double wij = st.w[0][i] * st.w[1][j];
        for (int k = 0; k < 3; ++k) {
          const double w = wij * st.w[2][k];
          const size_t n =
              grid.idx(st.base.x() + i, st.base.y() + j, st.base.z() + k);
          const Vec3 dpos =
              (Vec3(st.base.x() + i, st.base.y() + j, st.base.z() + k) -
               ps.x[p] * inv_dx) *
              grid.dx;
          v += w * grid.vel[n];
          c += (4.0 * inv_dx * inv_dx * w) * grid.vel[n] * dpos.transpose();
        }
      }
    ps.v[p] = v;
    ps.C[p] = c;
    ps.x[p] += dt * v;
    const Mat3 f_trial = (Mat3::Identity() + dt * c) * ps.F[p];
    if (!(f_trial.determinant() > 0.0) || !finite(f_trial)) {
#ifdef _OPENMP
#pragma omp critical
#endif
      bad = p;
      continue;
    }
    ps.F[p] = apply_plasticity(f_trial, mat);
  }
  if (bad >= 0)
    throw StepError("g2p: deformation gradient lost positivity at particle " +
                        std::to_string(bad),
                    bad);
}

void advance_tool(Vec3& pos, Quat& q, const double* action, int dims, double dt) {
  pos += dt * Vec3(action[0], action[1], action[2]);
  if (dims >= 6) {
    const Vec3 w(action[3], action[4], action[5]);
    q = quat_mul(quat_from_rotvec(w * dt), q).normalized();
  }
}

StepResult count_contacts(const Scene& scene) {
  StepResult r;
  const double margin = scene.ctx.contact_margin_cells * scene.dx();
  for (const Vec3& x : scene.particles.x)
    if (scene.tool.sdf(x).first <= margin) ++r.xi_p;
  for (const Vec3& x : scene.rigid.x)
    if (scene.tool.sdf(x).first <= margin) ++r.xi_r;
  return r;
}

StepResult step(Scene& scene, const double* action, int dims, Grid& grid) {
  const StepContext& ctx = scene.ctx;
  const double proj_margin = ctx.projection_margin_cells * scene.dx();
  Collider cont;
  if (scene.container) {
    cont.shape = scene.container.get();
    cont.friction = scene.container_friction;
    cont.margin = proj_margin;
  }
  for (int s = 0; s < ctx.substeps; ++s) {
    const double speed = scene.particles.max_speed();
    if (speed * ctx.dt >= scene.dx())
      throw StepError("CFL guard: dt * max speed = " +
                      std::to_string(speed * ctx.dt) + " exceeds dx");
    advance_tool(scene.tool.position, scene.tool.orientation, action, dims, ctx.dt);
    Collider tool;
    tool.shape = scene.tool.shape.get();
    tool.pos = scene.tool.position;
    tool.q = scene.tool.orientation;
    tool.lin_vel = Vec3(action[0], action[1], action[2]);
    tool.ang_vel = dims >= 6 ? Vec3(action[3], action[4], action[5]) : Vec3::Zero();
    tool.friction = scene.tool.friction;
    tool.margin = proj_margin;

    grid.activate(scene.particles);
    p2g(scene.particles, scene.material, grid, ctx.dt);
    grid_update(grid, ctx, &tool, scene.container ? &cont : nullptr,
                scene.spec.workspace);
    g2p(grid, scene.particles, scene.material, ctx.dt, ctx.parallel);
  }
  return count_contacts(scene);
}

}  // namespace grainsim
