#pragma once

#include <vector>

#include "grainsim/scene.hpp"

namespace grainsim {

struct Grid {
  int n = 64;       // cells per axis; nodes 0..n inclusive
  double dx = 1.0 / 64;
  Vec3i lo = Vec3i::Zero(), hi = Vec3i::Zero();  // active node range, inclusive
  std::vector<double> mass;
  std::vector<Vec3> vel;  // momentum after p2g, velocity after grid_update

  explicit Grid(int cells = 64) { resize(cells); }
  void resize(int cells);
  int nodes() const { return n + 1; }
  size_t idx(int i, int j, int k) const {
    return (size_t(i) * nodes() + j) * nodes() + k;
  }
  Vec3 node_pos(int i, int j, int k) const { return Vec3(i, j, k) * dx; }
  /// Set the active range to cover the particles' stencils and zero it.
  void activate(const ParticleSystem& ps, int pad = 2);
  double total_mass() const;
  Vec3 total_momentum() const;
};

/// Quadratic B-spline stencil of one particle: 3 weights and derivative
/// factors per axis over nodes base..base+2.
struct Stencil {
  Vec3i base;
  Vec3 fx;
  double w[3][3];   // [axis][offset]
  double dw[3][3];  // d/d fx; multiply by 1/dx for d/dx
};

Stencil make_stencil(const Vec3& x, double inv_dx);

/// Rigid collider snapshot used by the grid update.
struct Collider {
  const SdfSet* shape = nullptr;
  Vec3 pos = Vec3::Zero();
  Quat q;
  Vec3 lin_vel = Vec3::Zero();
  Vec3 ang_vel = Vec3::Zero();
  double friction = 0.4;
  double margin = 0.0;  // project nodes with sdf <= margin

  std::pair<double, Vec3> sdf(const Vec3& x) const {
    const Mat3 r = q.rotation();
    auto [d, nl] = shape->eval(r.transpose() * (x - pos));
    return {d, r * nl};
  }
  Vec3 velocity_at(const Vec3& x) const {
    return lin_vel + ang_vel.cross(x - pos);
  }
};

/// Sliding-friction velocity projection for one grid node. The normal
/// relative velocity is removed when approaching; the tangential part is
/// scaled by max(0, 1 - friction |v_n| / |v_t|).
Vec3 collide_velocity(const Collider& c, const Vec3& node_x, const Vec3& v_in);

/// SVD with proper rotations (det U = det V = +1); requires det(F) > 0.
void svd3(const Mat3& f, Mat3& u, Vec3& sigma, Mat3& v);

/// Fixed-corotated P(F) F^T = 2 mu (F - R) F^T + lambda (J - 1) J I.
Mat3 corotated_stress(const Mat3& f, double mu, double lambda);

/// Return-map the trial deformation gradient onto the material's yield
/// surface (Drucker-Prager projection, von Mises projection, or the
/// hydrostatic fluid reset).
Mat3 apply_plasticity(const Mat3& f, const MaterialParams& mat);

/// Drucker-Prager yield value of a symmetric stress (<= 0 is elastic).
double dp_yield(const Mat3& sigma, const MaterialParams& mat);

/// Principal Hencky stress of F (2 mu log Sigma + lambda tr(log Sigma) I
/// in the principal frame); the stress measure the yield check uses.
Mat3 hencky_stress(const Mat3& f, const MaterialParams& mat);

void p2g(const ParticleSystem& ps, const MaterialParams& mat, Grid& grid,
         double dt);
void grid_update(Grid& grid, const StepContext& ctx, const Collider* tool,
                 const Collider* container, const Box& workspace);
void g2p(const Grid& grid, ParticleSystem& ps, const MaterialParams& mat,
         double dt, bool parallel = false);

struct StepResult {
  int xi_p = 0;  // material particles in contact with the tool
  int xi_r = 0;  // rigid particles in contact with the tool
};

/// Advance the tool from a 3- or 6-dim action held for one substep.
void advance_tool(Vec3& pos, Quat& q, const double* action, int dims, double dt);

/// One control step: integrate the tool pose, run ctx.substeps substeps
/// of p2g -> grid_update -> g2p, then count tool contacts.
StepResult step(Scene& scene, const double* action, int dims, Grid& grid);

/// Contact counts at the current state (margin in cells from ctx).
StepResult count_contacts(const Scene& scene);

}  // namespace grainsim
