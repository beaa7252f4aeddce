#include "grainsim/sac.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>

namespace grainsim {
namespace {
constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // 0.5 log(2 pi)
constexpr double kSquashEps = 1e-6;
}  // namespace

void SacHyper::validate() const {
  if (!(gamma > 0 && gamma < 1)) throw ValidationError("sac: gamma must be in (0,1)");
  if (!(lr_policy > 0 && lr_q > 0 && lr_alpha > 0))
    throw ValidationError("sac: learning rates must be > 0");
  if (batch < 1) throw ValidationError("sac: batch must be >= 1");
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
    return;
  }
  if (!ring_) return;  // demo buffer: full means insertion stops
  data_[next_] = std::move(t);
  next_ = (next_ + 1) % capacity_;
}

uint64_t ReplayBuffer::checksum() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const Transition& t : data_) {
    h = fnv1a64(t.s.data(), t.s.size() * sizeof(float), h);
    h = fnv1a64(t.a.data(), t.a.size() * sizeof(float), h);
    h = fnv1a64(&t.r, sizeof(t.r), h);
    h = fnv1a64(t.s2.data(), t.s2.size() * sizeof(float), h);
    h = fnv1a64(&t.done, sizeof(t.done), h);
  }
  return h;
}

void DualReplay::sample(Rng& rng, int batch,
                        std::vector<const Transition*>& out) const {
  out.clear();
  const bool have_demo = demo.size() > 0;
  const bool have_exp = exp.size() > 0;
  if (!have_demo && !have_exp) return;
  int from_demo = 0, from_exp = 0;
  if (have_demo && have_exp) {
    from_demo = (batch + 1) / 2;
    from_exp = batch / 2;
  } else if (have_demo) {
    from_demo = batch;
  } else {
    from_exp = batch;
  }
  for (int i = 0; i < from_demo; ++i)
    out.push_back(&demo.at(rng.uniform_int(demo.size())));
  for (int i = 0; i < from_exp; ++i)
    out.push_back(&exp.at(rng.uniform_int(exp.size())));
}

SacAgent::SacAgent(int obs_dim, int act_dim, std::vector<double> act_lo,
                   std::vector<double> act_hi, const SacHyper& hp, uint64_t seed)
    : obs_dim_(obs_dim),
      act_dim_(act_dim),
      hp_(hp),
      rng_(seed_split(seed, "sac-agent")) {
  hp_.validate();
  if (hp_.target_entropy == 0) hp_.target_entropy = -double(act_dim);
  center_.resize(act_dim);
  half_.resize(act_dim);
  for (int d = 0; d < act_dim; ++d) {
    center_[d] = 0.5 * (act_lo[d] + act_hi[d]);
    half_[d] = 0.5 * (act_hi[d] - act_lo[d]);
  }
  Rng init(seed_split(seed, "sac-init"));
  std::vector<int> pi_sizes{obs_dim};
  std::vector<int> q_sizes{obs_dim + act_dim};
  for (int l = 0; l < hp_.hidden_layers; ++l) {
    pi_sizes.push_back(hp_.hidden);
    q_sizes.push_back(hp_.hidden);
  }
  pi_sizes.push_back(2 * act_dim);
  q_sizes.push_back(1);
  policy_ = nn::Mlp(pi_sizes, init);
  q1_ = nn::Mlp(q_sizes, init);
  q2_ = nn::Mlp(q_sizes, init);
  tq1_.copy_from(q1_);
  tq2_.copy_from(q2_);
  opt_pi_ = nn::Adam(policy_, hp_.lr_policy);
  opt_q1_ = nn::Adam(q1_, hp_.lr_q);
  opt_q2_ = nn::Adam(q2_, hp_.lr_q);
}

void SacAgent::act(const double* obs, bool deterministic, double* out) {
  std::vector<double> o(obs, obs + obs_dim_);
  const auto& y = policy_.forward(o, 1);
  for (int d = 0; d < act_dim_; ++d) {
    const double mean = y[d];
    double z = mean;
    if (!deterministic) {
      const double ls =
          std::clamp(y[act_dim_ + d], hp_.log_std_min, hp_.log_std_max);
      z += std::exp(ls) * rng_.normal();
    }
    out[d] = center_[d] + half_[d] * std::tanh(z);
  }
}

SacAgent::Losses SacAgent::update(const std::vector<const Transition*>& batch) {
  const int b = static_cast<int>(batch.size());
  if (b == 0) return {};
  const int od = obs_dim_, ad = act_dim_;
  std::vector<double> s(size_t(b) * od), s2(size_t(b) * od),
      sa(size_t(b) * (od + ad)), r(b), done(b);
  for (int i = 0; i < b; ++i) {
    const Transition& t = *batch[i];
    for (int k = 0; k < od; ++k) {
      s[size_t(i) * od + k] = t.s[k];
      s2[size_t(i) * od + k] = t.s2[k];
    }
    for (int k = 0; k < od; ++k) sa[size_t(i) * (od + ad) + k] = t.s[k];
    for (int k = 0; k < ad; ++k) sa[size_t(i) * (od + ad) + od + k] = t.a[k];
    r[i] = t.r;
    done[i] = t.done ? 1.0 : 0.0;
  }

  // --- targets from next-state policy samples ---
  std::vector<double> y_target(b);
  {
    const auto& pi2 = policy_.forward(s2, b);
    std::vector<double> s2a(size_t(b) * (od + ad));
    std::vector<double> logpi2(b, 0.0);
    for (int i = 0; i < b; ++i) {
      for (int k = 0; k < od; ++k) s2a[size_t(i) * (od + ad) + k] = s2[size_t(i) * od + k];
      for (int d = 0; d < ad; ++d) {
        const double mean = pi2[size_t(i) * 2 * ad + d];
        const double ls = std::clamp(pi2[size_t(i) * 2 * ad + ad + d],
                                     hp_.log_std_min, hp_.log_std_max);
        const double sd = std::exp(ls);
        const double xi = rng_.normal();
        const double z = mean + sd * xi;
        const double th = std::tanh(z);
        s2a[size_t(i) * (od + ad) + od + d] = center_[d] + half_[d] * th;
        logpi2[i] += -0.5 * xi * xi - kLogSqrt2Pi - ls -
                     std::log(std::max(1.0 - th * th, kSquashEps)) -
                     std::log(half_[d]);
      }
    }
    const auto q1v = tq1_.forward(s2a, b);
    const auto q2v = tq2_.forward(s2a, b);
    const double alpha = std::exp(log_alpha_);
    for (int i = 0; i < b; ++i) {
      const double qmin = std::min(q1v[i], q2v[i]);
      y_target[i] = r[i] + hp_.gamma * (1.0 - done[i]) * (qmin - alpha * logpi2[i]);
    }
  }

  Losses out;
  // --- twin Q regression ---
  for (nn::Mlp* qn : {&q1_, &q2_}) {
    qn->zero_grad();
    const auto& qv = qn->forward(sa, b);
    std::vector<double> dq(b);
    double loss = 0;
    for (int i = 0; i < b; ++i) {
      const double e = qv[i] - y_target[i];
      loss += e * e;
      dq[i] = 2.0 * e / b;
    }
    loss /= b;
    if (!std::isfinite(loss))
      throw StepError("sac: non-finite Q loss");
    qn->backward(dq, b);
    (qn == &q1_ ? out.q1 : out.q2) = loss;
    (qn == &q1_ ? opt_q1_ : opt_q2_).step();
  }

  // --- policy ---
  {
    const auto& pi = policy_.forward(s, b);
    std::vector<double> mean(size_t(b) * ad), lstd(size_t(b) * ad),
        xi(size_t(b) * ad), th(size_t(b) * ad), clamped(size_t(b) * ad);
    std::vector<double> s_anew(size_t(b) * (od + ad));
    std::vector<double> logpi(b, 0.0);
    for (int i = 0; i < b; ++i) {
      for (int k = 0; k < od; ++k)
        s_anew[size_t(i) * (od + ad) + k] = s[size_t(i) * od + k];
      for (int d = 0; d < ad; ++d) {
        const size_t j = size_t(i) * ad + d;
        mean[j] = pi[size_t(i) * 2 * ad + d];
        const double raw_ls = pi[size_t(i) * 2 * ad + ad + d];
        clamped[j] = (raw_ls < hp_.log_std_min || raw_ls > hp_.log_std_max) ? 1 : 0;
        lstd[j] = std::clamp(raw_ls, hp_.log_std_min, hp_.log_std_max);
        xi[j] = rng_.normal();
        const double z = mean[j] + std::exp(lstd[j]) * xi[j];
        th[j] = std::tanh(z);
        s_anew[size_t(i) * (od + ad) + od + d] = center_[d] + half_[d] * th[j];
        logpi[i] += -0.5 * xi[j] * xi[j] - kLogSqrt2Pi - lstd[j] -
                    std::log(std::max(1.0 - th[j] * th[j], kSquashEps)) -
                    std::log(half_[d]);
      }
    }
    const auto q1v = q1_.forward(s_anew, b);  // values copied below before reuse
    std::vector<double> q1c(q1v.begin(), q1v.end());
    const auto q2v = q2_.forward(s_anew, b);
    const double alpha = std::exp(log_alpha_);
    std::vector<double> dq1(b, 0.0), dq2(b, 0.0);
    double ploss = 0, mean_logpi = 0;
    for (int i = 0; i < b; ++i) {
      const double qmin = std::min(q1c[i], q2v[i]);
      ploss += alpha * logpi[i] - qmin;
      mean_logpi += logpi[i];
      (q1c[i] <= q2v[i] ? dq1[i] : dq2[i]) = -1.0 / b;
    }
    ploss /= b;
    mean_logpi /= b;
    if (!std::isfinite(ploss))
      throw StepError("sac: non-finite policy loss");

    // dL/da via the argmin Q net's input gradients
    q2_.zero_grad();
    const auto& dxa2 = q2_.backward(dq2, b);
    std::vector<double> da(size_t(b) * ad, 0.0);
    for (int i = 0; i < b; ++i)
      for (int d = 0; d < ad; ++d)
        da[size_t(i) * ad + d] = dxa2[size_t(i) * (od + ad) + od + d];
    q1_.zero_grad();
    const auto& dxa1 = q1_.backward(dq1, b);
    for (int i = 0; i < b; ++i)
      for (int d = 0; d < ad; ++d)
        da[size_t(i) * ad + d] += dxa1[size_t(i) * (od + ad) + od + d];

    std::vector<double> dpi(size_t(b) * 2 * ad, 0.0);
    for (int i = 0; i < b; ++i)
      for (int d = 0; d < ad; ++d) {
        const size_t j = size_t(i) * ad + d;
        const double t = th[j];
        const double one_m_t2 = 1.0 - t * t;
        const double dlogpi_dz =
            2.0 * t * one_m_t2 / std::max(one_m_t2, kSquashEps);
        const double gz = da[j] * half_[d] * one_m_t2 +
                          (alpha / b) * dlogpi_dz;
        const double sd = std::exp(lstd[j]);
        double glstd = gz * sd * xi[j] - alpha / b;
        if (clamped[j]) glstd = 0.0;
        dpi[size_t(i) * 2 * ad + d] = gz;
        dpi[size_t(i) * 2 * ad + ad + d] = glstd;
      }
    policy_.zero_grad();
    policy_.backward(dpi, b);
    opt_pi_.step();
    out.policy = ploss;
    out.mean_logpi = mean_logpi;

    // --- temperature toward the entropy target ---
    log_alpha_ += hp_.lr_alpha * (mean_logpi + hp_.target_entropy);
    out.alpha = std::exp(log_alpha_);
  }

  // --- target smoothing ---
  tq1_.blend_from(q1_, hp_.target_keep);
  tq2_.blend_from(q2_, hp_.target_keep);
  return out;
}

void SacAgent::save(const std::string& path) const {
  nn::save_checkpoint(path, {&policy_, &q1_, &q2_, &tq1_, &tq2_}, log_alpha_);
}

void SacAgent::load(const std::string& path) {
  nn::load_checkpoint(path, {&policy_, &q1_, &q2_, &tq1_, &tq2_}, &log_alpha_);
}

int preload_demos(TaskEnv& env, const std::vector<Trajectory>& demos,
                  SacAgent& agent, DualReplay& rb, Rng& rng, int batch,
                  TrainResult* track) {
  int updates = 0;
  std::vector<const Transition*> mb;
  for (const Trajectory& demo : demos) {
    if (demo.rows() != env.horizon())
      throw ValidationError("demo horizon " + std::to_string(demo.rows()) +
                            " does not match task horizon " +
                            std::to_string(env.horizon()));
    std::vector<double> obs = env.reset();
    for (int t = 0; t < demo.rows(); ++t) {
      double a[6] = {0, 0, 0, 0, 0, 0};
      for (int d = 0; d < std::min(demo.dims, 6); ++d) a[d] = demo.row(t)[d];
      auto so = env.step(a);
      Transition tr;
      tr.s.assign(obs.begin(), obs.end());
      tr.s2.assign(so.obs.begin(), so.obs.end());
      tr.a.resize(env.action_dims());
      for (int d = 0; d < env.action_dims(); ++d)
        tr.a[d] = float(std::clamp(a[d], env.spec().action_min[d],
                                   env.spec().action_max[d]));
      tr.r = float(so.reward.total());
      tr.done = 0;
      rb.demo.push(std::move(tr));
      obs = std::move(so.obs);
      // Alg. 3 line 9: demonstration data updates the networks as soon
      // as it lands in the buffer, sampled from the demo buffer alone.
      mb.clear();
      for (int i = 0; i < batch; ++i)
        mb.push_back(&rb.demo.at(rng.uniform_int(rb.demo.size())));
      agent.update(mb);
      ++updates;
    }
    if (track) {
      track->best_tcs = std::max(track->best_tcs, env.episode_tcs());
      if (env.episode_reward() > track->best_avg_reward) {
        track->best_avg_reward = env.episode_reward();
        track->best = demo;
        track->best_tcs = std::max(track->best_tcs, env.episode_tcs());
      }
    }
  }
  return updates;
}

TrainResult dgsac_train(TaskEnv& env, const std::vector<Trajectory>& demos,
                        const TrainOptions& opt) {
  SacHyper hp = opt.hyper;
  if (hp.target_entropy == 0) hp.target_entropy = -double(env.action_dims());
  SacAgent agent(env.obs_dim(), env.action_dims(), env.spec().action_min,
                 env.spec().action_max, hp, opt.seed);
  DualReplay rb(hp.demo_capacity, hp.exp_capacity);
  Rng rng(seed_split(opt.seed, "dgsac-train"));

  TrainResult res;
  if (opt.use_demo_buffer && !demos.empty())
    res.preload_updates = preload_demos(env, demos, agent, rb, rng, hp.batch, &res);
  res.demo_checksum_before = rb.demo.checksum();

  std::deque<double> recent_rewards;
  std::vector<const Transition*> mb;
  const int ad = env.action_dims();

  for (int ep = 0; ep < opt.episodes; ++ep) {
    std::vector<double> obs = env.reset();
    double q_loss_sum = 0, p_loss_sum = 0, ent_sum = 0, alpha_last = agent.alpha();
    int loss_count = 0;
    bool aborted = false;
    for (int t = 0; t < env.horizon(); ++t) {
      std::vector<double> a(ad);
      agent.act(obs.data(), false, a.data());
      TaskEnv::StepOut so;
      try {
        so = env.step(a.data());
      } catch (const StepError&) {
        // numerical failure ends the episode with a large penalty
        RewardBreakdown rb_pen;
        rb_pen.dist = -100.0;
        so.reward = rb_pen;
        so.done = true;
        aborted = true;
      }
      if (!aborted) {
        Transition tr;
        tr.s.assign(obs.begin(), obs.end());
        tr.s2.assign(so.obs.begin(), so.obs.end());
        tr.a.resize(ad);
        for (int d = 0; d < ad; ++d)
          tr.a[d] = float(std::clamp(a[d], env.spec().action_min[d],
                                     env.spec().action_max[d]));
        tr.r = float(so.reward.total());
        tr.done = 0;
        rb.exp.push(std::move(tr));
        obs = std::move(so.obs);
      }
      for (int u = 0; u < hp.updates_per_step; ++u) {
        if (opt.use_demo_buffer)
          rb.sample(rng, hp.batch, mb);
        else {
          mb.clear();
          if (rb.exp.size() > 0)
            for (int i = 0; i < hp.batch; ++i)
              mb.push_back(&rb.exp.at(rng.uniform_int(rb.exp.size())));
        }
        if (!mb.empty()) {
          auto losses = agent.update(mb);
          q_loss_sum += 0.5 * (losses.q1 + losses.q2);
          p_loss_sum += losses.policy;
          ent_sum += -losses.mean_logpi;
          alpha_last = losses.alpha;
          ++loss_count;
        }
      }
      if (so.done) break;
    }
    const double ep_reward = aborted ? -100.0 : env.episode_reward();
    const double ep_tcs = env.episode_tcs();
    res.best_tcs = std::max(res.best_tcs, ep_tcs);
    recent_rewards.push_back(ep_reward);
    if (recent_rewards.size() > 10) recent_rewards.pop_front();

    TrainEpisodeRow row;
    row.episode = ep;
    row.reward = ep_reward;
    row.tcs = ep_tcs;
    row.q_loss = loss_count ? q_loss_sum / loss_count : 0;
    row.policy_loss = loss_count ? p_loss_sum / loss_count : 0;
    row.alpha = alpha_last;
    row.entropy = loss_count ? ent_sum / loss_count : 0;
    res.curve.push_back(row);
    res.episodes_run = ep + 1;

    bool stop = res.best_tcs >= opt.stop_at_tcs;
    if ((ep + 1) % hp.eval_interval == 0 || ep + 1 == opt.episodes || stop) {
      // deterministic evaluation rollout
      std::vector<double> eobs = env.reset();
      Trajectory etraj = Trajectory::zeros(env.horizon(), ad,
                                           env.spec().action_min,
                                           env.spec().action_max);
      etraj.task_id = to_string(env.spec().kind);
      bool efail = false;
      for (int t = 0; t < env.horizon(); ++t) {
        agent.act(eobs.data(), true, etraj.row(t));
        try {
          auto so = env.step(etraj.row(t));
          eobs = std::move(so.obs);
        } catch (const StepError&) {
          efail = true;
          break;
        }
      }
      EvalInfo ev;
      ev.episode = ep;
      ev.reward = efail ? -100.0 : env.episode_reward();
      ev.tcs = env.episode_tcs();
      ev.final_euler_deg =
          quat_to_euler(env.scene().tool.orientation.normalized()) * (180.0 / kPi);
      res.evals.push_back(ev);
      res.best_tcs = std::max(res.best_tcs, ev.tcs);

      double avg = 0;
      for (double r : recent_rewards) avg += r;
      avg /= double(recent_rewards.size());
      if (avg > res.best_avg_reward) {
        res.best_avg_reward = avg;
        res.best = etraj;
        res.best_final_euler_deg = ev.final_euler_deg;
        if (!opt.checkpoint_path.empty()) agent.save(opt.checkpoint_path);
      }
      if (opt.stop_after_eval && opt.stop_after_eval(ev)) stop = true;
    }
    if (stop || res.best_tcs >= opt.stop_at_tcs) break;
  }
  res.demo_checksum_after = rb.demo.checksum();
  return res;
}

}  // namespace grainsim
