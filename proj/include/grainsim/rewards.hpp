#pragma once

#include <vector>

#include "grainsim/frames.hpp"
#include "grainsim/scene.hpp"

namespace grainsim {

/// Weighted Manhattan distance of one point to the goal.
inline double dw_point(const Vec3& p, const Vec3& goal, const Vec3& w) {
  return w.x() * std::fabs(p.x() - goal.x()) +
         w.y() * std::fabs(p.y() - goal.y()) +
         w.z() * std::fabs(p.z() - goal.z());
}

/// Indices of the n_elite particles with smallest DW to the goal; ties
/// break toward the lower index.
std::vector<int> elite_select(const std::vector<Vec3>& x, const Vec3& goal,
                              const Vec3& w, int n_elite);

/// Terminal-pose chaining objective (degrees; differences wrapped to
/// (-180, 180]).
double euler_objective(const Quat& q_end, const Vec3& theta_goal_deg,
                       const Vec3& gates, double beta_ea, double gamma_ea);

/// Flat observation: every downsample-th particle's position+velocity
/// (fixed stride from index 0, exactly floor(N/delta) particles), then
/// the tool pose (position, plus quaternion when rotation is enabled).
std::vector<double> observe(const Scene& scene);
int observation_dim(const TaskSpec& spec);

struct RewardBreakdown {
  double dist = 0;
  double pour_out = 0;
  double target = 0;
  double spill = 0;
  double collision_penalty = 0;
  double interaction = 0;
  double chain = 0;
  double total() const {
    return dist + pour_out + target + spill + collision_penalty + interaction +
           chain;
  }
  /// Completion-only terms (the TCS contribution of this step).
  double tcs_terms(TaskKind kind) const;
};

/// Dense distance reward over the designated particle index set.
double reward_dist(const std::vector<Vec3>& x, const std::vector<int>& subset,
                   const TaskSpec& spec);

RewardBreakdown reward_pour(const std::vector<Vec3>& x,
                            const std::vector<Vec3>& x_prev,
                            const TaskSpec& spec, int t);
RewardBreakdown reward_translate(const std::vector<Vec3>& x,
                                 const std::vector<Vec3>& x_prev,
                                 const TaskSpec& spec, int t);
RewardBreakdown reward_scoop(const std::vector<Vec3>& x,
                             const std::vector<Vec3>& x_prev,
                             const std::vector<int>& elites,
                             const TaskSpec& spec, int t, int xi_p, int xi_r,
                             double j_s);

/// Per-step reward for any task kind; elite selection (scoop) happens on
/// the pre-step state, matching the algorithmic order. q_end feeds the
/// terminal chaining term.
RewardBreakdown step_reward(const TaskSpec& spec, const std::vector<Vec3>& x,
                            const std::vector<Vec3>& x_prev, const Quat& q_end,
                            int t, int xi_p, int xi_r);

/// Row-wise trajectory concatenation; 3-dim inputs are zero-padded on the
/// angular components when mixed with 6-dim ones. Boundaries record the
/// cumulative sub-task end rows.
Trajectory concat_trajectories(const std::vector<Trajectory>& parts);

/// Replay scoring: recompute per-step rewards and the TCS from a frame
/// dump (the oracle route; positions are the dump's f32 values).
struct RolloutScore {
  double reward = 0;
  double tcs = 0;
  std::vector<RewardBreakdown> steps;
};
RolloutScore score_frames(const FrameDump& dump, const Scene& pristine);

}  // namespace grainsim
