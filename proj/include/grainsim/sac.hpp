#pragma once

#include <functional>
#include <limits>

#include "grainsim/env.hpp"
#include "grainsim/nn.hpp"

namespace grainsim {

struct SacHyper {
  double gamma = 0.99;
  double lr_policy = 0.003;
  double lr_q = 0.003;        // Table I lists policy/entropy rates; Q reuses 0.003
  double lr_alpha = 0.003;
  int batch = 128;
  double target_keep = 0.995;  // target smoothing coefficient (polyak keep)
  double target_entropy = 0;   // 0 = use -d_a
  int updates_per_step = 1;
  int eval_interval = 10;      // episodes between deterministic evaluations
  size_t demo_capacity = 50000;
  size_t exp_capacity = 100000;
  int hidden = 256;
  int hidden_layers = 2;
  double log_std_min = -20, log_std_max = 2;

  void validate() const;
};

struct Transition {
  std::vector<float> s, s2;
  std::vector<float> a;
  float r = 0;
  uint8_t done = 0;
};

class ReplayBuffer {
 public:
  ReplayBuffer(size_t capacity, bool ring) : capacity_(capacity), ring_(ring) {}
  /// Ring buffers overwrite oldest entries; the demonstration buffer
  /// stops inserting once full and never evicts.
  void push(Transition t);
  size_t size() const { return data_.size(); }
  const Transition& at(size_t i) const { return data_[i]; }
  uint64_t checksum() const;

 private:
  std::vector<Transition> data_;
  size_t capacity_;
  bool ring_;
  size_t next_ = 0;
};

/// Fixed demonstration buffer + experience ring. Minibatches draw
/// ceil(B/2) demo / floor(B/2) experience once both are non-empty.
struct DualReplay {
  ReplayBuffer demo;
  ReplayBuffer exp;

  DualReplay(size_t demo_cap, size_t exp_cap)
      : demo(demo_cap, false), exp(exp_cap, true) {}
  void sample(Rng& rng, int batch, std::vector<const Transition*>& out) const;
};

class SacAgent {
 public:
  SacAgent(int obs_dim, int act_dim, std::vector<double> act_lo,
           std::vector<double> act_hi, const SacHyper& hp, uint64_t seed);

  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  double alpha() const { return std::exp(log_alpha_); }

  /// Squashed-Gaussian action; deterministic mode returns the squashed
  /// mean. Always within bounds.
  void act(const double* obs, bool deterministic, double* out);

  struct Losses {
    double q1 = 0, q2 = 0, policy = 0, alpha = 0, mean_logpi = 0;
  };
  Losses update(const std::vector<const Transition*>& batch);

  void save(const std::string& path) const;
  void load(const std::string& path);

  nn::Mlp& policy_net() { return policy_; }
  nn::Mlp& q1_net() { return q1_; }

 private:
  void policy_dist(const std::vector<double>& obs, int batch,
                   std::vector<double>* mean, std::vector<double>* log_std);

  int obs_dim_, act_dim_;
  std::vector<double> center_, half_;
  SacHyper hp_;
  Rng rng_;
  nn::Mlp policy_, q1_, q2_, tq1_, tq2_;
  nn::Adam opt_pi_, opt_q1_, opt_q2_;
  double log_alpha_ = 0;
};

struct EvalInfo {
  int episode = 0;
  double reward = 0, tcs = 0;
  Vec3 final_euler_deg = Vec3::Zero();
};

struct TrainEpisodeRow {
  int episode = 0;
  double reward = 0, tcs = 0;
  double q_loss = 0, policy_loss = 0, alpha = 0, entropy = 0;
};

struct TrainOptions {
  int episodes = 150;  // N_E
  SacHyper hyper;
  uint64_t seed = 0;
  double stop_at_tcs = std::numeric_limits<double>::infinity();
  std::function<bool(const EvalInfo&)> stop_after_eval;  // optional
  std::string checkpoint_path;  // optional best-policy checkpoint
  bool use_demo_buffer = true;  // false = vanilla-SAC ablation
};

struct TrainResult {
  Trajectory best;  // tau*: deterministic eval rollout at the best average reward
  double best_avg_reward = -std::numeric_limits<double>::infinity();
  double best_tcs = -std::numeric_limits<double>::infinity();
  Vec3 best_final_euler_deg = Vec3::Zero();
  std::vector<TrainEpisodeRow> curve;  // one row per training episode
  std::vector<EvalInfo> evals;
  uint64_t demo_checksum_before = 0, demo_checksum_after = 0;
  int episodes_run = 0;
  int preload_updates = 0;
};

/// Execute each demonstration in the (granular) environment, storing
/// transitions into the demo buffer and updating once per stored
/// transition, sampling from the demo buffer alone. Returns the number
/// of update calls.
int preload_demos(TaskEnv& env, const std::vector<Trajectory>& demos,
                  SacAgent& agent, DualReplay& rb, Rng& rng, int batch,
                  TrainResult* track);

/// Alg.-3 training: preload, explore/store/update per step, periodic
/// deterministic evaluation, best-policy trajectory by highest average
/// training reward (10-episode moving average).
TrainResult dgsac_train(TaskEnv& env, const std::vector<Trajectory>& demos,
                        const TrainOptions& opt);

}  // namespace grainsim
