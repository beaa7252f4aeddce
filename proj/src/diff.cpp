#include "grainsim/diff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "grainsim/io.hpp"
#include "grainsim/kernels.hpp"

namespace grainsim {

double dw_loss(const std::vector<Vec3>& x, const Vec3& goal, const Vec3& w) {
  if (x.empty()) return 0.0;
  const double* base = x[0].data();
  const auto& k = kern::get();
  double s = 0;
  for (int a = 0; a < 3; ++a)
    if (w[a] != 0.0) s += w[a] * k.sum_abs_dev(x.size(), base + a, 3, goal[a]);
  return s / double(x.size());
}

double DwLoss::eval(const ParticleSystem& ps) const {
  return dw_loss(ps.x, goal, weights);
}

void DwLoss::grad(const ParticleSystem& ps, std::vector<Vec3>& gx) const {
  const int n = ps.count();
  gx.assign(n, Vec3::Zero());
  const double inv_n = 1.0 / std::max(1, n);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) {
      const double d = ps.x[i][a] - goal[a];
      if (d > 0)
        gx[i][a] = weights[a] * inv_n;
      else if (d < 0)
        gx[i][a] = -weights[a] * inv_n;
    }
}

CheckpointStore record_forward(Scene& scene, const Trajectory& traj,
                               const DwLoss& loss) {
  CheckpointStore store;
  const int T = traj.rows();
  store.states.reserve(T + 1);
  store.step_loss.reserve(T);
  Grid grid(scene.grid_n);
  for (int t = 0; t < T; ++t) {
    store.states.push_back(SimState::capture(scene));
    try {
      step(scene, traj.row(t), traj.dims, grid);
    } catch (const StepError& e) {
      throw StepError(std::string(e.what()) + " (control step " +
                          std::to_string(t) + ")",
                      e.particle);
    }
    store.step_loss.push_back(loss.eval(scene.particles));
    store.total_loss += store.step_loss.back();
  }
  store.states.push_back(SimState::capture(scene));
  return store;
}

double GradientReport::max_abs() const {
  return kern::get().max_abs(grad.size(), grad.data());
}

namespace adjoint {
namespace {

double safe_inv(double d) {
  const double floor_v = 1e-8;
  if (std::fabs(d) < floor_v) d = d >= 0 ? floor_v : -floor_v;
  return 1.0 / d;
}

/// Standard SVD reverse-mode formula with safeguarded gaps.
Mat3 svd_backward(const Mat3& u, const Vec3& sig, const Mat3& v, const Mat3& gu,
                  const Vec3& gsig, const Mat3& gv) {
  Mat3 km;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      km(i, j) = i == j ? 0.0 : safe_inv(sig[j] * sig[j] - sig[i] * sig[i]);
  const Mat3 du = km.cwiseProduct(u.transpose() * gu - gu.transpose() * u) *
                  sig.asDiagonal();
  const Mat3 dv = sig.asDiagonal() *
                  Mat3(km.cwiseProduct(v.transpose() * gv - gv.transpose() * v));
  return u * (du + Mat3(gsig.asDiagonal()) + dv) * v.transpose();
}

}  // namespace

Mat3 corotated_stress(const Mat3& f, double mu, double lambda, const Mat3& gs) {
  const double j = f.determinant();
  const Mat3 finv_t = f.inverse().transpose();
  Mat3 gf = (lambda * (2.0 * j - 1.0) * gs.trace() * j) * finv_t;
  if (mu == 0.0) return gf;
  Mat3 u, v;
  Vec3 sig;
  svd3(f, u, sig, v);
  const Mat3 r = u * v.transpose();
  gf += 2.0 * mu * (gs + gs.transpose()) * f - 2.0 * mu * gs.transpose() * r;
  // rotation factor of the polar decomposition: dR = R * skew(B m)
  const Mat3 rbar = -2.0 * mu * gs * f;
  const Mat3 m_mat = r.transpose() * rbar;
  const Vec3 m = axial(0.5 * (m_mat - m_mat.transpose()));
  const Mat3 s_p = v * sig.asDiagonal() * v.transpose();
  const Mat3 b = (Mat3::Identity() * sig.sum() - s_p).inverse();
  gf += 2.0 * r * skew(b * m);
  return gf;
}

Mat3 plasticity(const Mat3& f, const MaterialParams& mat, const Mat3& gout) {
  if (mat.kind == MaterialKind::Fluid) {
    const double j = f.determinant();
    const double jbar = std::cbrt(j) / (3.0 * j) * gout.trace();
    return jbar * j * f.inverse().transpose();
  }
  Mat3 u, v;
  Vec3 sig;
  svd3(f, u, sig, v);
  const Vec3 eps = sig.array().log();
  const double tr = eps.sum();
  const Vec3 dev = eps - Vec3::Constant(tr / 3.0);
  const double m = dev.norm();

  const bool granular = mat.kind == MaterialKind::Granular;
  bool tip = false;
  bool project = false;
  double dg = 0;
  if (granular) {
    if (tr > 0.0 || m < 1e-14) {
      tip = true;
    } else {
      dg = m + mat.dp_alpha() * (3.0 * mat.lambda + 2.0 * mat.mu) /
                   (2.0 * mat.mu) * tr;
      project = dg > 0.0;
    }
  } else {
    dg = m - mat.yield_stress / (2.0 * mat.mu);
    project = dg > 0.0 && m > 1e-14;
  }
  if (!tip && !project) return gout;  // elastic: identity map

  Vec3 gsig = Vec3::Zero();
  Mat3 gu, gv;
  if (tip) {
    gu = gout * v;
    gv = gout.transpose() * u;
  } else {
    const Vec3 eps_p = eps - (dg / m) * dev;
    const Vec3 d = eps_p.array().exp();
    gu = gout * v * d.asDiagonal();
    gv = gout.transpose() * u * d.asDiagonal();
    const Vec3 gd = (u.transpose() * gout * v).diagonal();
    const Vec3 geps_p = gd.cwiseProduct(d);
    // pull geps_p back through the projection jacobian (transposed)
    const double sum_g = geps_p.sum();
    const double dev_dot = dev.dot(geps_p);
    Vec3 geps = Vec3::Constant(sum_g / 3.0);
    const Vec3 p_g = geps_p - Vec3::Constant(sum_g / 3.0);  // P * geps_p
    if (granular) {
      const double c = mat.dp_alpha() * (3.0 * mat.lambda + 2.0 * mat.mu) /
                       (2.0 * mat.mu);
      geps -= c * (dev_dot / m * Vec3::Ones() +
                   tr * (p_g / m - dev * (dev_dot / (m * m * m))));
    } else {
      const double k = mat.yield_stress / (2.0 * mat.mu);
      geps += k * (p_g / m - dev * (dev_dot / (m * m * m)));
    }
    gsig = geps.cwiseQuotient(sig);
  }
  return svd_backward(u, sig, v, gu, gsig, gv);
}

Vec3 collide_velocity(const Collider& c, const Vec3& node_x, const Vec3& v_in,
                      const Vec3& gout, Vec3* g_lin_vel, Vec3* g_ang_vel,
                      Vec3* g_pos, double g_q[4]) {
  auto [d, n] = c.sdf(node_x);
  if (d > c.margin) return gout;
  const Vec3 v_tool = c.velocity_at(node_x);
  const Vec3 rel = v_in - v_tool;
  const double vn = n.dot(rel);
  if (vn >= 0.0) return gout;

  const Vec3 tang = rel - vn * n;
  const double tl = tang.norm();
  Vec3 gv_tool = Vec3::Zero(), gn = Vec3::Zero(), gv_in = Vec3::Zero();
  if (tl <= 1e-12) {
    gv_tool = gout;
  } else {
    const double kappa = std::max(0.0, 1.0 + c.friction * vn / tl);
    gv_tool += gout;
    const double gkappa = gout.dot(tang);
    Vec3 gtang = kappa * gout;
    double gvn = 0;
    if (kappa > 0.0) {
      gvn += gkappa * c.friction / tl;
      const double gtl = -gkappa * c.friction * vn / (tl * tl);
      gtang += (gtl / tl) * tang;
    }
    Vec3 grel = gtang;
    gvn -= n.dot(gtang);
    gn -= vn * gtang;
    gn += gvn * rel;
    grel += gvn * n;
    gv_in += grel;
    gv_tool -= grel;
  }
  if (g_lin_vel) *g_lin_vel += gv_tool;
  if (g_ang_vel) *g_ang_vel += (node_x - c.pos).cross(gv_tool);
  if (g_pos) *g_pos += c.ang_vel.cross(gv_tool);
  if (g_q && gn.squaredNorm() > 0.0) {
    Mat3 dr[4];
    quat_rotation_derivs(c.q, dr);
    const Vec3 n_loc = c.q.rotation().transpose() * n;
    for (int k = 0; k < 4; ++k) g_q[k] += gn.dot(dr[k] * n_loc);
  }
  return gv_in;
}

void advance_tool(const Vec3& /*pos_in*/, const Quat& q_in, const double* action,
                  int dims, double dt, Vec3* g_pos, double g_q[4],
                  double* g_action) {
  // position chain: pos' = pos + dt v_lin
  for (int a = 0; a < 3; ++a) g_action[a] += dt * (*g_pos)[a];
  if (dims < 6) return;

  const Vec3 w(action[3], action[4], action[5]);
  const Vec3 uvec = w * dt;
  const Quat dq = quat_from_rotvec(uvec);
  const Quat prod = quat_mul(dq, q_in);
  const double nm = prod.norm();
  const double qn[4] = {prod.w / nm, prod.x / nm, prod.y / nm, prod.z / nm};
  // normalize adjoint: gu = (g - (g.qn) qn) / nm
  const double dot = g_q[0] * qn[0] + g_q[1] * qn[1] + g_q[2] * qn[2] + g_q[3] * qn[3];
  double gu[4];
  for (int k = 0; k < 4; ++k) gu[k] = (g_q[k] - dot * qn[k]) / nm;
  // Hamilton product adjoint: prod = dq * q_in
  const double aw = dq.w, ax = dq.x, ay = dq.y, az = dq.z;
  const double bw = q_in.w, bx = q_in.x, by = q_in.y, bz = q_in.z;
  double gdq[4], gqin[4];
  gdq[0] = gu[0] * bw + gu[1] * bx + gu[2] * by + gu[3] * bz;
  gdq[1] = -gu[0] * bx + gu[1] * bw - gu[2] * bz + gu[3] * by;
  gdq[2] = -gu[0] * by + gu[1] * bz + gu[2] * bw - gu[3] * bx;
  gdq[3] = -gu[0] * bz - gu[1] * by + gu[2] * bx + gu[3] * bw;
  gqin[0] = gu[0] * aw + gu[1] * ax + gu[2] * ay + gu[3] * az;
  gqin[1] = -gu[0] * ax + gu[1] * aw + gu[2] * az - gu[3] * ay;
  gqin[2] = -gu[0] * ay - gu[1] * az + gu[2] * aw + gu[3] * ax;
  gqin[3] = -gu[0] * az + gu[1] * ay - gu[2] * ax + gu[3] * aw;
  // rotvec adjoint: dq = (cos(th/2), sin(th/2)/th * u)
  const double th = uvec.norm();
  double s, r;  // s = sin(th/2)/th, r = s'(th)/th
  if (th < 1e-4) {
    s = 0.5 - th * th / 48.0;
    r = -1.0 / 24.0;
  } else {
    const double ch = std::cos(0.5 * th);
    s = std::sin(0.5 * th) / th;
    r = (0.5 * ch - s) / (th * th);
  }
  const Vec3 gvec(gdq[1], gdq[2], gdq[3]);
  Vec3 gu_vec = s * gvec + (r * uvec.dot(gvec)) * uvec;
  gu_vec += gdq[0] * (-0.5 * s) * uvec;
  for (int a = 0; a < 3; ++a) g_action[3 + a] += dt * gu_vec[a];
  for (int k = 0; k < 4; ++k) g_q[k] = gqin[k];
}

}  // namespace adjoint

namespace {

struct AdjointGrid {
  std::vector<double> mass;
  std::vector<Vec3> mom;
  void fit(const Grid& g) {
    if (mass.size() != g.mass.size()) {
      mass.assign(g.mass.size(), 0.0);
      mom.assign(g.vel.size(), Vec3::Zero());
    }
  }
  void zero_active(const Grid& g) {
    for (int i = g.lo.x(); i <= g.hi.x(); ++i)
      for (int j = g.lo.y(); j <= g.hi.y(); ++j) {
        const size_t row = g.idx(i, j, g.lo.z());
        for (int k = 0; k <= g.hi.z() - g.lo.z(); ++k) {
          mass[row + k] = 0.0;
          mom[row + k].setZero();
        }
      }
  }
};

Collider make_tool_collider(const Scene& scene, const double* action, int dims) {
  Collider tool;
  tool.shape = scene.tool.shape.get();
  tool.pos = scene.tool.position;
  tool.q = scene.tool.orientation;
  tool.lin_vel = Vec3(action[0], action[1], action[2]);
  tool.ang_vel = dims >= 6 ? Vec3(action[3], action[4], action[5]) : Vec3::Zero();
  tool.friction = scene.tool.friction;
  tool.margin = scene.ctx.projection_margin_cells / scene.grid_n;
  return tool;
}

// Forward node chain of grid_update, exposed stage by stage so the
// adjoint can recompute intermediates.
struct NodeChain {
  Vec3 v0, v1, v2, v3, v4;
  bool floor_sticky = false;
  bool wall_clamp[3] = {false, false, false};
};

// mirrors grid_update: gravity, container, tool, then domain boundaries
NodeChain node_forward(const StepContext& ctx, const Collider* tool,
                       const Collider* container, const Box& ws, const Vec3& p,
                       double m, const Vec3& mom) {
  NodeChain nc;
  nc.v0 = mom / m;
  nc.v1 = nc.v0 + ctx.gravity * ctx.dt;
  nc.v2 = container ? collide_velocity(*container, p, nc.v1) : nc.v1;
  nc.v3 = tool ? collide_velocity(*tool, p, nc.v2) : nc.v2;
  nc.v4 = nc.v3;
  if (p.y() <= ws.lo.y()) {
    if (nc.v4.y() < 0.0) {
      nc.v4.setZero();
      nc.floor_sticky = true;
    }
  } else {
    for (int a = 0; a < 3; ++a) {
      if ((p[a] <= ws.lo[a] && nc.v4[a] < 0.0) ||
          (p[a] >= ws.hi[a] && nc.v4[a] > 0.0)) {
        nc.v4[a] = 0.0;
        nc.wall_clamp[a] = true;
      }
    }
  }
  return nc;
}

}  // namespace

GradientReport trajectory_gradients(Scene& scene, const CheckpointStore& store,
                                    const Trajectory& traj, const DwLoss& loss) {
  const int T = store.horizon();
  const int dims = traj.dims;
  const int S = scene.ctx.substeps;
  const double dt = scene.ctx.dt;
  const int np = store.states.empty() ? 0 : store.states[0].particles.count();
  const double inv_dx = scene.grid_n;  // 1/dx on the unit cube
  const double k2 = 4.0 * inv_dx * inv_dx;

  GradientReport rep;
  rep.horizon = T;
  rep.dims = dims;
  rep.grad.assign(size_t(T) * dims, 0.0);
  rep.log10_max.assign(T, -std::numeric_limits<double>::infinity());
  rep.finite.assign(T, 1);

  // running adjoints of the state after the step being processed
  std::vector<Vec3> ax(np, Vec3::Zero()), av(np, Vec3::Zero());
  std::vector<Mat3> aF(np, Mat3::Zero()), aC(np, Mat3::Zero());
  std::vector<Vec3> ax2(np), av2(np);
  std::vector<Mat3> aF2(np), aC2(np);
  Vec3 apos = Vec3::Zero();
  double aq[4] = {0, 0, 0, 0};

  Grid grid_a(scene.grid_n), grid_b(scene.grid_n);
  AdjointGrid ag;
  std::vector<SimState> sub(S);
  std::vector<Vec3> loss_g;

  Collider cont;
  if (scene.container) {
    cont.shape = scene.container.get();
    cont.friction = scene.container_friction;
    cont.margin = scene.ctx.projection_margin_cells / scene.grid_n;
  }
  const Collider* cont_p = scene.container ? &cont : nullptr;
  const Box& ws = scene.spec.workspace;

  for (int t = T - 1; t >= 0; --t) {
    loss.grad(store.states[t + 1].particles, loss_g);
    for (int i = 0; i < np; ++i) ax[i] += loss_g[i];

    // rebuild the substep tape for step t
    store.states[t].restore(scene);
    const double* act = traj.row(t);
    for (int s = 0; s < S; ++s) {
      sub[s] = SimState::capture(scene);
      advance_tool(scene.tool.position, scene.tool.orientation, act, dims, dt);
      Collider tool = make_tool_collider(scene, act, dims);
      grid_a.activate(scene.particles);
      p2g(scene.particles, scene.material, grid_a, dt);
      grid_update(grid_a, scene.ctx, &tool, cont_p, ws);
      g2p(grid_a, scene.particles, scene.material, dt);
    }

    double* grow = rep.grad.data() + size_t(t) * dims;
    for (int s = S - 1; s >= 0; --s) {
      const ParticleSystem& ps = sub[s].particles;
      // pose after the advance at substep s
      Vec3 pose_pos = sub[s].tool_pos;
      Quat pose_q = sub[s].tool_q;
      advance_tool(pose_pos, pose_q, act, dims, dt);
      Collider tool;
      tool.shape = scene.tool.shape.get();
      tool.pos = pose_pos;
      tool.q = pose_q;
      tool.lin_vel = Vec3(act[0], act[1], act[2]);
      tool.ang_vel = dims >= 6 ? Vec3(act[3], act[4], act[5]) : Vec3::Zero();
      tool.friction = scene.tool.friction;
      tool.margin = scene.ctx.projection_margin_cells / scene.grid_n;

      grid_a.activate(ps);
      p2g(ps, scene.material, grid_a, dt);   // grid_a: mass + momentum
      grid_b.lo = grid_a.lo;
      grid_b.hi = grid_a.hi;
      for (int i = grid_a.lo.x(); i <= grid_a.hi.x(); ++i)
        for (int j = grid_a.lo.y(); j <= grid_a.hi.y(); ++j)
          for (int kk = grid_a.lo.z(); kk <= grid_a.hi.z(); ++kk) {
            const size_t n = grid_a.idx(i, j, kk);
            grid_b.mass[n] = grid_a.mass[n];
            grid_b.vel[n] = grid_a.vel[n];
          }
      grid_update(grid_b, scene.ctx, &tool, cont_p, ws);  // grid_b: velocities

      ag.fit(grid_a);
      ag.zero_active(grid_a);
      for (int i = 0; i < np; ++i) {
        ax2[i].setZero();
        av2[i].setZero();
        aF2[i].setZero();
        aC2[i].setZero();
      }

      // ---- g2p adjoint ----
      for (int p = 0; p < np; ++p) {
        const Stencil st = make_stencil(ps.x[p], inv_dx);
        Vec3 vp = Vec3::Zero();
        Mat3 cp = Mat3::Zero();
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            for (int kk = 0; kk < 3; ++kk) {
              const double w = st.w[0][i] * st.w[1][j] * st.w[2][kk];
              const size_t n = grid_b.idx(st.base.x() + i, st.base.y() + j,
                                          st.base.z() + kk);
              const Vec3 dpos = (Vec3(st.base.x() + i, st.base.y() + j,
                                      st.base.z() + kk) -
                                 ps.x[p] * inv_dx) /
                                inv_dx;
              vp += w * grid_b.vel[n];
              cp += (k2 * w) * grid_b.vel[n] * dpos.transpose();
            }
        const Mat3 f_trial = (Mat3::Identity() + dt * cp) * ps.F[p];
        const Mat3 aFtrial = adjoint::plasticity(f_trial, scene.material, aF[p]);
        const Mat3 ctot = aC[p] + dt * aFtrial * ps.F[p].transpose();
        const Vec3 vtot = av[p] + dt * ax[p];
        ax2[p] += ax[p];
        aF2[p] += (Mat3::Identity() + dt * cp).transpose() * aFtrial;
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            for (int kk = 0; kk < 3; ++kk) {
              const double w = st.w[0][i] * st.w[1][j] * st.w[2][kk];
              const size_t n = grid_b.idx(st.base.x() + i, st.base.y() + j,
                                          st.base.z() + kk);
              const Vec3 dpos = (Vec3(st.base.x() + i, st.base.y() + j,
                                      st.base.z() + kk) -
                                 ps.x[p] * inv_dx) /
                                inv_dx;
              const Vec3 vi = grid_b.vel[n];
              const Vec3 cd = ctot * dpos;
              ag.mom[n] += w * vtot + (k2 * w) * cd;
              const Vec3 gw(inv_dx * st.dw[0][i] * st.w[1][j] * st.w[2][kk],
                            inv_dx * st.w[0][i] * st.dw[1][j] * st.w[2][kk],
                            inv_dx * st.w[0][i] * st.w[1][j] * st.dw[2][kk]);
              ax2[p] += gw * (vi.dot(vtot) + k2 * cd.dot(vi));
              ax2[p] -= (k2 * w) * (ctot.transpose() * vi);
            }
      }

      // ---- grid_update adjoint (consumes ag.mom as dL/dv_final) ----
      Vec3 g_lin = Vec3::Zero(), g_ang = Vec3::Zero();
      for (int i = grid_a.lo.x(); i <= grid_a.hi.x(); ++i)
        for (int j = grid_a.lo.y(); j <= grid_a.hi.y(); ++j)
          for (int kk = grid_a.lo.z(); kk <= grid_a.hi.z(); ++kk) {
            const size_t n = grid_a.idx(i, j, kk);
            const double m = grid_a.mass[n];
            if (m <= 0.0) {
              ag.mom[n].setZero();
              continue;
            }
            const Vec3 p = grid_a.node_pos(i, j, kk);
            const NodeChain nc = node_forward(scene.ctx, &tool, cont_p, ws, p,
                                              m, grid_a.vel[n]);
            Vec3 g = ag.mom[n];
            if (nc.floor_sticky) g.setZero();
            for (int a = 0; a < 3; ++a)
              if (nc.wall_clamp[a]) g[a] = 0.0;
            g = adjoint::collide_velocity(tool, p, nc.v2, g, &g_lin, &g_ang,
                                          &apos, aq);
            if (cont_p)
              g = adjoint::collide_velocity(*cont_p, p, nc.v1, g, nullptr,
                                            nullptr, nullptr, nullptr);
            ag.mom[n] = g / m;
            ag.mass[n] = -g.dot(nc.v0) / m;
          }

      // ---- p2g adjoint ----
      const double stress_k = -dt * k2;
      for (int p = 0; p < np; ++p) {
        const Stencil st = make_stencil(ps.x[p], inv_dx);
        const Mat3 kirchhoff =
            corotated_stress(ps.F[p], scene.material.mu, scene.material.lambda);
        const Mat3 affine =
            stress_k * ps.volume[p] * kirchhoff + ps.mass[p] * ps.C[p];
        const Vec3 mv = ps.mass[p] * ps.v[p];
        Mat3 abar = Mat3::Zero();
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            for (int kk = 0; kk < 3; ++kk) {
              const double w = st.w[0][i] * st.w[1][j] * st.w[2][kk];
              const size_t n = grid_a.idx(st.base.x() + i, st.base.y() + j,
                                          st.base.z() + kk);
              const Vec3 dpos = (Vec3(st.base.x() + i, st.base.y() + j,
                                      st.base.z() + kk) -
                                 ps.x[p] * inv_dx) /
                                inv_dx;
              const Vec3 gm = ag.mom[n];
              abar += w * gm * dpos.transpose();
              av2[p] += (ps.mass[p] * w) * gm;
              const Vec3 gw(inv_dx * st.dw[0][i] * st.w[1][j] * st.w[2][kk],
                            inv_dx * st.w[0][i] * st.dw[1][j] * st.w[2][kk],
                            inv_dx * st.w[0][i] * st.w[1][j] * st.dw[2][kk]);
              ax2[p] += gw * (gm.dot(mv + affine * dpos) + ag.mass[n] * ps.mass[p]);
              ax2[p] -= w * (affine.transpose() * gm);
            }
        aC2[p] += ps.mass[p] * abar;
        aF2[p] += adjoint::corotated_stress(ps.F[p], scene.material.mu,
                                            scene.material.lambda,
                                            stress_k * ps.volume[p] * abar);
      }

      // ---- collision velocity terms, then the tool advance adjoint ----
      for (int a = 0; a < 3; ++a) grow[a] += g_lin[a];
      if (dims >= 6)
        for (int a = 0; a < 3; ++a) grow[3 + a] += g_ang[a];
      adjoint::advance_tool(sub[s].tool_pos, sub[s].tool_q, act, dims, dt, &apos,
                            aq, grow);

      std::swap(ax, ax2);
      std::swap(av, av2);
      std::swap(aF, aF2);
      std::swap(aC, aC2);
    }

    // per-step stats
    bool fin = true;
    double mx = 0;
    for (int d0 = 0; d0 < dims; ++d0) {
      const double g = grow[d0];
      if (!std::isfinite(g)) fin = false;
      mx = std::max(mx, std::fabs(g));
    }
    rep.finite[t] = fin ? 1 : 0;
    if (!fin)
      rep.first_nonfinite_step = t;
    else
      rep.log10_max[t] = mx > 0 ? std::log10(mx)
                                : -std::numeric_limits<double>::infinity();
    if (!fin) rep.log10_max[t] = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

std::vector<DiagnosticsRow> gradient_diagnostics(const GradientReport& report) {
  std::vector<DiagnosticsRow> rows;
  rows.reserve(report.horizon);
  bool contaminated = false;
  // backward order: last control step first
  for (int t = report.horizon - 1; t >= 0; --t) {
    DiagnosticsRow r;
    r.reversed_step = report.horizon - t;
    const double v = report.log10_max[t];
    if (!report.finite[t]) {
      r.log10_value = "nan";
      contaminated = true;
    } else if (std::isinf(v)) {
      r.log10_value = "zero";
    } else {
      r.log10_value = format_double(v);
    }
    r.finite_flag = (report.finite[t] && !contaminated) ? 1 : 0;
    rows.push_back(r);
  }
  return rows;
}

void write_diagnostics_csv(const std::vector<DiagnosticsRow>& rows,
                           const std::string& path) {
  std::string out = "reversed_step,log10_max_abs_grad,finite_flag\n";
  for (const auto& r : rows)
    out += std::to_string(r.reversed_step) + "," + r.log10_value + "," +
           std::to_string(r.finite_flag) + "\n";
  atomic_write_text(path, out);
}

}  // namespace grainsim
