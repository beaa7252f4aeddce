#include "grainsim/env.hpp"

#include <algorithm>

namespace grainsim {

TaskEnv::TaskEnv(Scene scene)
    : pristine_(std::move(scene)), scene_(pristine_), grid_(pristine_.grid_n) {}

std::vector<double> TaskEnv::reset() {
  scene_.particles = pristine_.particles;
  scene_.tool.position = pristine_.tool.position;
  scene_.tool.orientation = pristine_.tool.orientation;
  t_ = 0;
  ep_reward_ = 0;
  ep_tcs_ = 0;
  horizon_override_ = -1;
  return observe(scene_);
}

TaskEnv::StepOut TaskEnv::step(const double* action) {
  const TaskSpec& spec = scene_.spec;
  std::vector<double> a(action, action + spec.action_dims);
  for (int d = 0; d < spec.action_dims; ++d)
    a[d] = std::clamp(a[d], spec.action_min[d], spec.action_max[d]);

  prev_x_ = scene_.particles.x;
  const StepResult sr = grainsim::step(scene_, a.data(), spec.action_dims, grid_);

  TaskSpec local = spec;
  if (horizon_override_ > 0) local.horizon = horizon_override_;
  StepOut out;
  out.xi_p = sr.xi_p;
  out.xi_r = sr.xi_r;
  out.reward = step_reward(local, scene_.particles.x, prev_x_,
                           scene_.tool.orientation, t_, sr.xi_p, sr.xi_r);
  out.tcs_delta = out.reward.tcs_terms(spec.kind);
  ep_reward_ += out.reward.total();
  ep_tcs_ += out.tcs_delta;
  ++t_;
  out.done = t_ >= local.horizon;
  out.obs = observe(scene_);
  return out;
}

TaskEnv::Rollout TaskEnv::run(const Trajectory& traj, FrameWriter* frames,
                              std::vector<std::vector<Vec3>>* track) {
  reset();
  horizon_override_ = traj.rows();
  Rollout r;
  r.traj = traj;
  r.traj.clamp_to_bounds();
  if (frames)
    frames->write(scene_.tool.position, scene_.tool.orientation,
                  scene_.particles.x);
  for (int t = 0; t < traj.rows(); ++t) {
    // trajectories may carry 6 dims into a 3-dim task; use the env dims
    double a[6] = {0, 0, 0, 0, 0, 0};
    const double* src = r.traj.row(t);
    for (int d = 0; d < std::min(traj.dims, 6); ++d) a[d] = src[d];
    StepOut so = step(a);
    r.steps.push_back(so.reward);
    if (frames)
      frames->write(scene_.tool.position, scene_.tool.orientation,
                    scene_.particles.x);
    if (track) track->push_back(scene_.particles.x);
  }
  r.reward = ep_reward_;
  r.tcs = ep_tcs_;
  r.final_tool_euler_deg =
      quat_to_euler(scene_.tool.orientation.normalized()) * (180.0 / kPi);
  return r;
}

double max_achievable_tcs(const TaskSpec& spec) {
  switch (spec.kind) {
    case TaskKind::Translate:
    case TaskKind::Move:
      return spec.rc.beta_t * spec.observed_count;
    case TaskKind::Pour:
      return spec.rc.beta_p + spec.rc.beta_t * spec.observed_count;
    case TaskKind::Scoop:
      return spec.rc.beta_t * spec.elite_count +
             spec.rc.beta_ea * spec.rc.gamma_ea;
  }
  return 0;
}

}  // namespace grainsim
