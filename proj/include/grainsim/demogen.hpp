#pragma once

#include <vector>

#include "grainsim/diff.hpp"

namespace grainsim {

struct DemoGenConfig {
  int iterations = 200;  // N_E
  double learning_rate = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double threshold = 0.0;  // sub-task convergence threshold
  MaterialKind material = MaterialKind::Fluid;
};

/// Convergence rule: the latest loss sits above the sub-task threshold
/// and the relative change stayed below 5% for more than 5 consecutive
/// iterations.
bool converged(const std::vector<double>& history, double threshold);

struct DemoGenResult {
  enum class Status { Converged, MaxIterations, NonFiniteGradient };
  Status status = Status::MaxIterations;
  Trajectory best;
  double best_loss = 0;
  double initial_loss = 0;
  std::vector<double> loss_history;  // loss of each evaluated iterate
  int iterations_run = 0;
  GradientReport report;  // attached diagnostics on non-finite abort
};

/// Alg.-2 demonstration generation: zero-initialized trajectory, per-step
/// weighted-Manhattan loss, checkpointed backward pass, Adam on
/// bound-normalized parameters. The scene material must be Fluid or
/// ElastoPlastic (Granular is rejected).
DemoGenResult demogen(const Scene& scene, const DemoGenConfig& cfg);

}  // namespace grainsim
