#pragma once

#include <memory>
#include <string>
#include <vector>

#include "grainsim/errors.hpp"
#include "grainsim/math.hpp"

namespace grainsim {

enum class MaterialKind { Granular, Fluid, ElastoPlastic };

const char* to_string(MaterialKind k);
MaterialKind material_kind_from_string(const std::string& s);

/// Lamé parameters from Young's modulus and Poisson ratio.
/// Throws std::domain_error for E <= 0 or nu outside (0 excluded only
/// at the upper end: nu must satisfy nu < 0.5; nu <= -1 is rejected too).
std::pair<double, double> lame_from_elastic(double youngs, double poisson);

struct MaterialParams {
  MaterialKind kind = MaterialKind::Granular;
  double youngs_modulus = 1000.0;
  double poisson_ratio = 0.2;
  double mu = 0.0;      // Lamé shear modulus
  double lambda = 0.0;  // Lamé first parameter
  double friction_angle_deg = 30.0;  // Granular only
  double yield_stress = 10.0;        // ElastoPlastic only
  double density = 1.0;              // per-particle mass = density * volume

  /// Fill mu/lambda from (E, nu); Fluid overrides mu = 0.
  void derive_lame();
  void validate() const;

  /// Drucker-Prager friction coefficient sqrt(2/3) * 2 sin(phi) / (3 - sin(phi)).
  double dp_alpha() const;

  static MaterialParams make(MaterialKind kind, double youngs, double poisson,
                             double friction_deg = 30.0, double yield = 10.0,
                             double density = 1.0);
};

/// Material particle state, struct-of-arrays.
struct ParticleSystem {
  std::vector<Vec3> x;   // position, [0,1]^3 m
  std::vector<Vec3> v;   // velocity, m/s
  std::vector<Mat3> F;   // deformation gradient
  std::vector<Mat3> C;   // affine velocity matrix, 1/s
  std::vector<double> mass;
  std::vector<double> volume;

  int count() const { return static_cast<int>(x.size()); }
  void resize(int n);
  double total_mass() const;
  Vec3 total_momentum() const;
  double max_speed() const;
  void validate() const;
};

enum class PrimKind { HalfSpace, Box, Capsule, ShellSegment };

struct SdfPrim {
  PrimKind kind = PrimKind::Box;
  // HalfSpace: normal (away from solid), offset: solid = {n.p <= offset}
  // Box: center, half extents
  // Capsule: segment [a, b], radius
  // ShellSegment: center, radius (mid surface), thickness, axis (unit,
  //   toward the opening), open_angle_deg (kept part: angle from axis >= it)
  Vec3 normal_dir = Vec3::UnitY();
  double offset = 0;
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Zero();
  Vec3 a = Vec3::Zero(), b = Vec3::Zero();
  double radius = 0;
  double thickness = 0;
  Vec3 axis = Vec3::UnitY();
  double open_angle_deg = 90;

  double dist(const Vec3& p) const;
  Vec3 normal(const Vec3& p) const;  // analytic gradient of dist
};

/// Union of analytic primitives in a common local frame.
struct SdfSet {
  std::vector<SdfPrim> prims;
  /// Signed distance and outward normal in the local frame; normal falls
  /// back to a central difference near union seams.
  std::pair<double, Vec3> eval(const Vec3& p) const;
  double dist(const Vec3& p) const;
};

/// Rigid kinematic tool: pose + analytic SDF composition.
struct ToolState {
  Vec3 position = Vec3::Zero();
  Quat orientation;  // unit, renormalized every update
  std::shared_ptr<const SdfSet> shape;
  double friction = 0.4;

  /// Signed distance and world-frame unit normal at world point x.
  std::pair<double, Vec3> sdf(const Vec3& x) const;
};

/// Static container decomposition; positions never change over an episode.
struct RigidParticleSet {
  std::vector<Vec3> x;
  int count() const { return static_cast<int>(x.size()); }
};

enum class TaskKind { Scoop, Translate, Pour, Move };

const char* to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

struct RewardConsts {
  double beta_dist = 0.01;
  double gamma_dist = 0.0;
  double beta_p = 0.0;   // pour-out bonus
  double beta_t = 0.0;   // target-region term
  double beta_n = 0.0;   // spill penalty (negative)
  double beta_c = 0.0;   // interaction bonus per contacting particle
  double beta_i = 0.0;   // container-collision penalty (negative)
  double beta_ea = 0.0;  // Euler-angle objective weight
  double gamma_ea = 0.0; // Euler-angle objective bias (degrees scale)
};

struct TaskSpec {
  TaskKind kind = TaskKind::Translate;
  int horizon = 120;            // N_H control steps
  Box workspace;                // grid-boundary box (free-slip walls, sticky floor)
  Box target_region;            // Omega
  Box oob_keep;                 // Phi = complement of this box
  Box container_region;         // source container interior (pour exit test)
  Vec3 goal = Vec3::Zero();     // P_goal
  Vec3 dw_weights = Vec3::Ones();  // W_alpha
  RewardConsts rc;
  int elite_count = 0;          // ~N_p* (0 = use all)
  int observed_count = 0;       // N_p* (filled from particle count at load)
  int downsample = 1;           // delta_d
  int action_dims = 3;          // d_a: 3 or 6
  std::vector<double> action_min, action_max;  // size action_dims
  Vec3 rotation_gate = Vec3::Zero();   // C_r(eps) per Euler angle, 0/1
  Vec3 theta_goal_deg = Vec3::Zero();  // chaining target angles
  bool pour_indicator_flip = false;
  double demogen_threshold = 0.0;      // sub-task convergence threshold
  int demogen_iterations = 200;
  MaterialKind demogen_material = MaterialKind::Fluid;

  int tool_state_dims() const { return action_dims == 6 ? 7 : 3; }  // d_e
  void validate() const;
};

/// Action sequence, one row per control step, row length = N_a * d_a.
struct Trajectory {
  int dims = 3;  // d_a
  std::vector<double> actions;  // horizon * dims
  std::vector<double> lo, hi;   // per-dimension bounds, size dims
  std::vector<int> boundaries;  // cumulative sub-task end rows (concat metadata)
  std::string task_id;

  int rows() const { return dims ? static_cast<int>(actions.size()) / dims : 0; }
  double* row(int r) { return actions.data() + size_t(r) * dims; }
  const double* row(int r) const { return actions.data() + size_t(r) * dims; }
  void clamp_to_bounds();
  bool within_bounds(double tol = 0.0) const;
  static Trajectory zeros(int rows, int dims, const std::vector<double>& lo,
                          const std::vector<double>& hi);
};

}  // namespace grainsim
