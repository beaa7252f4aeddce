#pragma once

#include <optional>
#include <string>
#include <vector>

#include "grainsim/engine.hpp"
#include "grainsim/rewards.hpp"

namespace grainsim {

/// The MDP around the physics: owns a pristine scene copy, steps it with
/// clamped actions, produces observations, rewards and per-episode TCS.
class TaskEnv {
 public:
  explicit TaskEnv(Scene scene);

  const TaskSpec& spec() const { return scene_.spec; }
  const Scene& scene() const { return scene_; }
  int obs_dim() const { return observation_dim(scene_.spec); }
  int action_dims() const { return scene_.spec.action_dims; }
  int horizon() const { return scene_.spec.horizon; }

  std::vector<double> reset();

  struct StepOut {
    std::vector<double> obs;
    RewardBreakdown reward;
    double tcs_delta = 0;
    bool done = false;
    int xi_p = 0, xi_r = 0;
  };
  /// Clamps the action to bounds and advances one control step.
  StepOut step(const double* action);

  double episode_reward() const { return ep_reward_; }
  double episode_tcs() const { return ep_tcs_; }
  int t() const { return t_; }

  struct Rollout {
    double reward = 0;
    double tcs = 0;
    Trajectory traj;
    std::vector<RewardBreakdown> steps;
    Vec3 final_tool_euler_deg = Vec3::Zero();
  };
  /// Execute a whole trajectory from reset; terminal rewards fire at the
  /// trajectory's own last row. Optionally dumps frames (initial state
  /// plus one frame per step) and/or collects post-step positions.
  Rollout run(const Trajectory& traj, FrameWriter* frames = nullptr,
              std::vector<std::vector<Vec3>>* track = nullptr);

 private:
  Scene pristine_;
  Scene scene_;
  Grid grid_;
  std::vector<Vec3> prev_x_;
  int t_ = 0;
  double ep_reward_ = 0, ep_tcs_ = 0;
  int horizon_override_ = -1;
};

/// Maximum achievable TCS for target-sparse tasks (all designated
/// particles in the target region, no spills/collisions, perfect pose).
double max_achievable_tcs(const TaskSpec& spec);

}  // namespace grainsim
