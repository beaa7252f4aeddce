#pragma once

#include <string>
#include <vector>

#include "grainsim/engine.hpp"

namespace grainsim {

/// Snapshot of everything a control step mutates.
struct SimState {
  ParticleSystem particles;
  Vec3 tool_pos = Vec3::Zero();
  Quat tool_q;

  static SimState capture(const Scene& s) {
    return {s.particles, s.tool.position, s.tool.orientation};
  }
  void restore(Scene& s) const {
    s.particles = particles;
    s.tool.position = tool_pos;
    s.tool.orientation = tool_q;
  }
};

/// Weighted-Manhattan trajectory-optimization loss (mean over particles).
struct DwLoss {
  Vec3 weights = Vec3::Ones();
  Vec3 goal = Vec3::Zero();

  double eval(const ParticleSystem& ps) const;
  /// dL/dx into gx (overwritten, resized to the particle count).
  void grad(const ParticleSystem& ps, std::vector<Vec3>& gx) const;
};

/// Eq.-2 style loss on raw positions (sum form used by rewards lives in
/// rewards.hpp; this one is the demogen objective).
double dw_loss(const std::vector<Vec3>& x, const Vec3& goal, const Vec3& w);

/// Per-control-step snapshots: states[t] is the state before step t,
/// states[horizon] the final state; step_loss[t] is evaluated on the
/// post-step state.
struct CheckpointStore {
  std::vector<SimState> states;
  std::vector<double> step_loss;
  double total_loss = 0;
  int horizon() const { return static_cast<int>(step_loss.size()); }
};

/// Run the trajectory forward, checkpointing every control step.
CheckpointStore record_forward(Scene& scene, const Trajectory& traj,
                               const DwLoss& loss);

struct GradientReport {
  int horizon = 0;
  int dims = 0;
  std::vector<double> grad;        // horizon x dims action gradient
  std::vector<double> log10_max;   // per step, log10 max |grad row| (-inf when zero)
  std::vector<uint8_t> finite;     // per step, 1 when the row is finite
  int first_nonfinite_step = -1;   // time index, -1 when none

  const double* row(int t) const { return grad.data() + size_t(t) * dims; }
  bool all_finite() const { return first_nonfinite_step < 0; }
  double max_abs() const;
};

/// Reverse pass per Alg.-2 structure: reload checkpoint t, re-run step t
/// recording substep states, and accumulate adjoints of the per-step
/// losses into the step-t action gradient. Non-finite adjoints are
/// recorded, never clipped. The scene is used as scratch.
GradientReport trajectory_gradients(Scene& scene, const CheckpointStore& store,
                                    const Trajectory& traj, const DwLoss& loss);

struct DiagnosticsRow {
  int reversed_step;        // 1 = last control step (first processed backward)
  std::string log10_value;  // number, "zero", or "nan"
  int finite_flag;          // 0 once contamination has set in
};

/// Fig.-5 style series, CSV-ready (reversed_step, log10_max_abs_grad,
/// finite_flag). A non-finite row at time k marks k and every earlier
/// time step unavailable.
std::vector<DiagnosticsRow> gradient_diagnostics(const GradientReport& report);

void write_diagnostics_csv(const std::vector<DiagnosticsRow>& rows,
                           const std::string& path);

// Building-block adjoints, exposed for finite-difference unit tests.
namespace adjoint {

/// dL/dF for S = corotated_stress(F): gS is dL/dS.
Mat3 corotated_stress(const Mat3& f, double mu, double lambda, const Mat3& gs);

/// dL/dF for G = apply_plasticity(F): gout is dL/dG.
Mat3 plasticity(const Mat3& f, const MaterialParams& mat, const Mat3& gout);

/// Adjoint of collide_velocity. Accumulates into the collider adjoints;
/// returns dL/dv_in. Contact set and local normal are frozen.
Vec3 collide_velocity(const Collider& c, const Vec3& node_x, const Vec3& v_in,
                      const Vec3& gout, Vec3* g_lin_vel, Vec3* g_ang_vel,
                      Vec3* g_pos, double g_q[4]);

/// Adjoint of advance_tool: consumes the post-advance pose adjoint and
/// produces the pre-advance pose adjoint plus action contributions.
void advance_tool(const Vec3& pos_in, const Quat& q_in, const double* action,
                  int dims, double dt, Vec3* g_pos, double g_q[4],
                  double* g_action);

}  // namespace adjoint

}  // namespace grainsim
