#include "grainsim/demogen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "grainsim/kernels.hpp"

namespace grainsim {

bool converged(const std::vector<double>& history, double threshold) {
  if (history.empty()) return false;
  if (!(history.back() > threshold)) return false;
  int streak = 0;
  for (size_t i = history.size(); i-- > 1;) {
    const double prev = history[i - 1];
    const double change = prev == 0.0
                              ? (history[i] == 0.0 ? 0.0 : 1.0)
                              : std::fabs(history[i] - prev) / std::fabs(prev);
    if (change < 0.05)
      ++streak;
    else
      break;
  }
  return streak > 5;
}

DemoGenResult demogen(const Scene& scene_in, const DemoGenConfig& cfg) {
  if (cfg.material == MaterialKind::Granular)
    throw std::invalid_argument(
        "demogen: granular materials are rejected (unstable gradients); "
        "use fluid or elastoplastic");
  if (cfg.iterations < 1)
    throw std::invalid_argument("demogen: iterations must be >= 1");
  if (!(cfg.learning_rate > 0))
    throw std::invalid_argument("demogen: learning rate must be > 0");

  Scene scene = scene_in;
  apply_material_override(scene, cfg.material);
  const SimState start = SimState::capture(scene);

  const TaskSpec& spec = scene.spec;
  const int dims = spec.action_dims;
  const int rows = spec.horizon;
  const size_t n = size_t(rows) * dims;

  std::vector<double> mid(dims), half(dims);
  for (int d = 0; d < dims; ++d) {
    mid[d] = 0.5 * (spec.action_min[d] + spec.action_max[d]);
    half[d] = 0.5 * (spec.action_max[d] - spec.action_min[d]);
  }

  // Adam runs on bound-normalized parameters; actions stay in bounds by
  // clamping u to [-1, 1].
  std::vector<double> u(n, 0.0), gu(n, 0.0), m(n, 0.0), v(n, 0.0);
  Trajectory traj = Trajectory::zeros(rows, dims, spec.action_min, spec.action_max);
  traj.task_id = to_string(spec.kind);

  DwLoss loss;
  loss.weights = spec.dw_weights;
  loss.goal = spec.goal;

  DemoGenResult res;
  res.best_loss = std::numeric_limits<double>::infinity();
  const auto& kn = kern::get();

  for (int it = 0; it < cfg.iterations; ++it) {
    for (size_t i = 0; i < n; ++i)
      traj.actions[i] = mid[i % dims] + half[i % dims] * u[i];

    start.restore(scene);
    CheckpointStore store = record_forward(scene, traj, loss);
    res.loss_history.push_back(store.total_loss);
    res.iterations_run = it + 1;
    if (it == 0) res.initial_loss = store.total_loss;
    if (store.total_loss < res.best_loss) {
      res.best_loss = store.total_loss;
      res.best = traj;
    }
    if (converged(res.loss_history, cfg.threshold)) {
      res.status = DemoGenResult::Status::Converged;
      return res;
    }
    if (it + 1 == cfg.iterations) break;

    GradientReport rep = trajectory_gradients(scene, store, traj, loss);
    if (!rep.all_finite()) {
      res.status = DemoGenResult::Status::NonFiniteGradient;
      res.report = std::move(rep);
      return res;
    }
    for (size_t i = 0; i < n; ++i) gu[i] = rep.grad[i] * half[i % dims];
    const double bc1 = 1.0 / (1.0 - std::pow(cfg.beta1, it + 1));
    const double bc2 = 1.0 / (1.0 - std::pow(cfg.beta2, it + 1));
    kn.adam_step(n, u.data(), gu.data(), m.data(), v.data(), cfg.learning_rate,
                 cfg.beta1, cfg.beta2, cfg.eps, bc1, bc2);
    for (double& ui : u) ui = std::clamp(ui, -1.0, 1.0);
  }
  res.status = DemoGenResult::Status::MaxIterations;
  return res;
}

}  // namespace grainsim
