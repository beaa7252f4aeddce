#include "grainsim/rewards.hpp"

#include <algorithm>
#include <numeric>

#include "grainsim/engine.hpp"

namespace grainsim {

std::vector<int> elite_select(const std::vector<Vec3>& x, const Vec3& goal,
                              const Vec3& w, int n_elite) {
  const int n = static_cast<int>(x.size());
  n_elite = std::min(n_elite, n);
  std::vector<std::pair<double, int>> keyed(n);
  for (int i = 0; i < n; ++i) keyed[i] = {dw_point(x[i], goal, w), i};
  std::partial_sort(keyed.begin(), keyed.begin() + n_elite, keyed.end());
  std::vector<int> out(n_elite);
  for (int i = 0; i < n_elite; ++i) out[i] = keyed[i].second;
  return out;
}

double euler_objective(const Quat& q_end, const Vec3& theta_goal_deg,
                       const Vec3& gates, double beta_ea, double gamma_ea) {
  const Vec3 euler = quat_to_euler(q_end.normalized()) * (180.0 / kPi);
  double err = 0;
  for (int a = 0; a < 3; ++a)
    err += gates[a] * std::fabs(wrap_deg(euler[a] - theta_goal_deg[a]));
  return beta_ea * (gamma_ea - err);
}

int observation_dim(const TaskSpec& spec) {
  return (spec.observed_count / spec.downsample) * 6 + spec.tool_state_dims();
}

std::vector<double> observe(const Scene& scene) {
  const TaskSpec& spec = scene.spec;
  const int k = spec.observed_count / spec.downsample;
  std::vector<double> obs;
  obs.reserve(size_t(k) * 6 + spec.tool_state_dims());
  for (int i = 0; i < k; ++i) {
    const int idx = i * spec.downsample;
    const Vec3& x = scene.particles.x[idx];
    const Vec3& v = scene.particles.v[idx];
    obs.insert(obs.end(), {x.x(), x.y(), x.z(), v.x(), v.y(), v.z()});
  }
  const Vec3& tp = scene.tool.position;
  obs.insert(obs.end(), {tp.x(), tp.y(), tp.z()});
  if (spec.tool_state_dims() == 7) {
    const Quat& q = scene.tool.orientation;
    obs.insert(obs.end(), {q.w, q.x, q.y, q.z});
  }
  return obs;
}

double RewardBreakdown::tcs_terms(TaskKind kind) const {
  switch (kind) {
    case TaskKind::Translate:
    case TaskKind::Move:
      return target + spill;
    case TaskKind::Pour:
      return pour_out + target;
    case TaskKind::Scoop:
      return target + chain + spill + collision_penalty;
  }
  return 0;
}

double reward_dist(const std::vector<Vec3>& x, const std::vector<int>& subset,
                   const TaskSpec& spec) {
  double sum = 0;
  if (subset.empty()) {
    for (const Vec3& p : x) sum += dw_point(p, spec.goal, spec.dw_weights);
  } else {
    for (int i : subset) sum += dw_point(x[i], spec.goal, spec.dw_weights);
  }
  return spec.rc.beta_dist * (spec.rc.gamma_dist - sum);
}

namespace {

bool in_phi(const Vec3& p, const TaskSpec& spec) {
  return !spec.oob_keep.contains(p);
}

void check_counts(const std::vector<Vec3>& x, const std::vector<Vec3>& x_prev) {
  if (x.size() != x_prev.size())
    throw ValidationError("reward: particle count mismatch between states");
}

bool terminal(const TaskSpec& spec, int t) { return t == spec.horizon - 1; }

}  // namespace

RewardBreakdown reward_pour(const std::vector<Vec3>& x,
                            const std::vector<Vec3>& x_prev,
                            const TaskSpec& spec, int t) {
  check_counts(x, x_prev);
  RewardBreakdown rb;
  rb.dist = reward_dist(x, {}, spec);
  const int n = static_cast<int>(x.size());
  for (int i = 0; i < n; ++i) {
    const bool was_in = spec.container_region.contains(x_prev[i]);
    const bool now_in = spec.container_region.contains(x[i]);
    if (was_in && !now_in)  // exited the source container this step
      rb.target += spec.rc.beta_t * (spec.target_region.contains(x[i]) ? 1.0 : -1.0);
  }
  if (terminal(spec, t)) {
    bool any_out = false;
    for (int i = 0; i < n; ++i)
      if (!spec.container_region.contains(x[i])) any_out = true;
    double ind = any_out ? 1.0 : -1.0;
    if (spec.pour_indicator_flip) ind = -ind;
    rb.pour_out = spec.rc.beta_p * ind;
  }
  return rb;
}

RewardBreakdown reward_translate(const std::vector<Vec3>& x,
                                 const std::vector<Vec3>& x_prev,
                                 const TaskSpec& spec, int t) {
  check_counts(x, x_prev);
  RewardBreakdown rb;
  rb.dist = reward_dist(x, {}, spec);
  const int n = static_cast<int>(x.size());
  for (int i = 0; i < n; ++i)
    if (in_phi(x[i], spec) && !in_phi(x_prev[i], spec)) rb.spill += spec.rc.beta_n;
  if (terminal(spec, t))
    for (int i = 0; i < n; ++i)
      rb.target += spec.rc.beta_t * (spec.target_region.contains(x[i]) ? 1.0 : -1.0);
  return rb;
}

RewardBreakdown reward_scoop(const std::vector<Vec3>& x,
                             const std::vector<Vec3>& x_prev,
                             const std::vector<int>& elites,
                             const TaskSpec& spec, int t, int xi_p, int xi_r,
                             double j_s) {
  check_counts(x, x_prev);
  RewardBreakdown rb;
  rb.dist = reward_dist(x, elites, spec);
  if (terminal(spec, t)) {
    for (int i : elites)
      rb.target += spec.rc.beta_t * (spec.target_region.contains(x[i]) ? 1.0 : -1.0);
    rb.chain = j_s;
  }
  rb.interaction = spec.rc.beta_c * xi_p;
  const int n = static_cast<int>(x.size());
  for (int i = 0; i < n; ++i)
    if (in_phi(x[i], spec) && !in_phi(x_prev[i], spec)) rb.spill += spec.rc.beta_n;
  if (xi_r > 0) rb.collision_penalty = spec.rc.beta_i;
  return rb;
}

RewardBreakdown step_reward(const TaskSpec& spec, const std::vector<Vec3>& x,
                            const std::vector<Vec3>& x_prev, const Quat& q_end,
                            int t, int xi_p, int xi_r) {
  switch (spec.kind) {
    case TaskKind::Pour:
      return reward_pour(x, x_prev, spec, t);
    case TaskKind::Translate:
    case TaskKind::Move:
      return reward_translate(x, x_prev, spec, t);
    case TaskKind::Scoop: {
      const auto elites = elite_select(x_prev, spec.goal, spec.dw_weights,
                                       spec.elite_count);
      const double j_s =
          terminal(spec, t)
              ? euler_objective(q_end, spec.theta_goal_deg, spec.rotation_gate,
                                spec.rc.beta_ea, spec.rc.gamma_ea)
              : 0.0;
      return reward_scoop(x, x_prev, elites, spec, t, xi_p, xi_r, j_s);
    }
  }
  return {};
}

Trajectory concat_trajectories(const std::vector<Trajectory>& parts) {
  if (parts.empty()) throw ValidationError("concat: no trajectories");
  if (parts.size() == 1) return parts[0];
  int dims = 3;
  for (const Trajectory& p : parts) dims = std::max(dims, p.dims);
  std::vector<double> lo(dims, 0), hi(dims, 0);
  bool have_bounds = false, have_angular = false;
  for (const Trajectory& p : parts) {
    for (int d = 0; d < std::min(p.dims, 3); ++d) {
      if (!have_bounds) {
        lo[d] = p.lo[d];
        hi[d] = p.hi[d];
      } else if (p.lo[d] != lo[d] || p.hi[d] != hi[d]) {
        throw ValidationError("concat: linear action bound mismatch");
      }
    }
    have_bounds = true;
    if (p.dims == 6 && dims == 6) {
      for (int d = 3; d < 6; ++d) {
        if (!have_angular) {
          lo[d] = p.lo[d];
          hi[d] = p.hi[d];
        } else if (p.lo[d] != lo[d] || p.hi[d] != hi[d]) {
          throw ValidationError("concat: angular action bound mismatch");
        }
      }
      have_angular = true;
    }
  }
  Trajectory out;
  out.dims = dims;
  out.lo = lo;
  out.hi = hi;
  int rows = 0;
  for (const Trajectory& p : parts) rows += p.rows();
  out.actions.assign(size_t(rows) * dims, 0.0);
  int at = 0;
  for (const Trajectory& p : parts) {
    for (int r = 0; r < p.rows(); ++r) {
      double* dst = out.row(at + r);
      const double* src = p.row(r);
      for (int d = 0; d < p.dims; ++d) dst[d] = src[d];
    }
    at += p.rows();
    out.boundaries.push_back(at);
    out.task_id += (out.task_id.empty() ? "" : "+") +
                   (p.task_id.empty() ? std::string("unnamed") : p.task_id);
  }
  return out;
}

RolloutScore score_frames(const FrameDump& dump, const Scene& pristine) {
  RolloutScore score;
  if (dump.frames.size() < 2) return score;
  TaskSpec spec = pristine.spec;
  spec.horizon = static_cast<int>(dump.frames.size()) - 1;
  const double margin = pristine.ctx.contact_margin_cells * pristine.dx();
  ToolState tool = pristine.tool;
  for (size_t t = 1; t < dump.frames.size(); ++t) {
    const Frame& cur = dump.frames[t];
    const Frame& prev = dump.frames[t - 1];
    tool.position = cur.tool_pos;
    tool.orientation = cur.tool_q.normalized();
    int xi_p = 0, xi_r = 0;
    for (const Vec3& p : cur.x)
      if (tool.sdf(p).first <= margin) ++xi_p;
    for (const Vec3& p : pristine.rigid.x)
      if (tool.sdf(p).first <= margin) ++xi_r;
    const RewardBreakdown rb = step_reward(spec, cur.x, prev.x, tool.orientation,
                                           static_cast<int>(t) - 1, xi_p, xi_r);
    score.reward += rb.total();
    score.tcs += rb.tcs_terms(spec.kind);
    score.steps.push_back(rb);
  }
  return score;
}

}  // namespace grainsim
