// Command-line front end: demogen, train, chain, gradcheck, sweep, rollout.
// Exit codes: 0 success, 2 validation/config error, 3 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "grainsim/demogen.hpp"
#include "grainsim/io.hpp"
#include "grainsim/manifest.hpp"
#include "grainsim/sac.hpp"

namespace fs = std::filesystem;
using namespace grainsim;

namespace {

struct GlobalOpts {
  uint64_t seed = 0;
  bool deterministic = true;
  std::string out_dir = "out";
  std::string config;  // optional overrides file
};

Scene load_scene(const std::string& path, const GlobalOpts& g, uint64_t seed,
                 const ConfigDoc* extra = nullptr) {
  ConfigDoc doc = parse_config_file(path);
  if (!g.config.empty()) doc.merge(parse_config_file(g.config));
  if (extra) doc.merge(*extra);
  Scene scene = load_task(doc, seed);
  scene.ctx.parallel = !g.deterministic;
  return scene;
}

std::vector<std::pair<std::string, std::string>> input_hashes(
    const std::vector<std::string>& paths) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& p : paths) out.emplace_back(fs::path(p).filename().string(), hash_file(p));
  return out;
}

void write_loss_csv(const std::string& path, const std::vector<double>& history) {
  CsvWriter csv(path, {"iteration", "loss"});
  for (size_t i = 0; i < history.size(); ++i) csv.row({double(i), history[i]});
  csv.close();
}

int cmd_demogen(const GlobalOpts& g, const std::string& scene_path, int ndemos,
                int iterations, const std::string& material) {
  fs::create_directories(g.out_dir);
  RunManifest man(g.out_dir, "demogen", g.seed, input_hashes({scene_path}));
  for (int d = 0; d < ndemos; ++d) {
    const uint64_t dseed = seed_split(g.seed, "demo-" + std::to_string(d));
    Scene scene = load_scene(scene_path, g, dseed);
    DemoGenConfig cfg;
    cfg.iterations = iterations > 0 ? iterations : scene.spec.demogen_iterations;
    cfg.threshold = scene.spec.demogen_threshold;
    cfg.material = material.empty() ? scene.spec.demogen_material
                                    : material_kind_from_string(material);
    DemoGenResult res = demogen(scene, cfg);
    const std::string base = g.out_dir + "/demo_" + std::to_string(d);
    res.best.task_id = to_string(scene.spec.kind);
    save_trajectory(res.best, base + ".traj");
    man.add_output("trajectory", base + ".traj");
    write_loss_csv(base + "_loss.csv", res.loss_history);
    man.add_output("loss_history", base + "_loss.csv");
    man.note("demo_" + std::to_string(d) + "_final_loss", res.best_loss);
    man.note("demo_" + std::to_string(d) + "_initial_loss", res.initial_loss);
    std::cout << "demo " << d << ": loss " << res.initial_loss << " -> "
              << res.best_loss << " in " << res.iterations_run << " iterations ("
              << (res.status == DemoGenResult::Status::Converged
                      ? "converged"
                      : res.status == DemoGenResult::Status::MaxIterations
                            ? "max-iterations"
                            : "non-finite-gradient")
              << ")\n";
    if (res.status == DemoGenResult::Status::NonFiniteGradient) {
      write_diagnostics_csv(gradient_diagnostics(res.report),
                            base + "_gradient_report.csv");
      man.add_output("gradient_report", base + "_gradient_report.csv");
      return 3;
    }
  }
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& scene_path,
              const std::string& demo_dir, int episodes, bool no_demos,
              bool stop_at_max) {
  fs::create_directories(g.out_dir);
  RunManifest man(g.out_dir, "train", g.seed, input_hashes({scene_path}));
  Scene scene = load_scene(scene_path, g, g.seed);
  TaskEnv env(std::move(scene));

  std::vector<Trajectory> demos;
  if (!no_demos) {
    if (!demo_dir.empty() && fs::is_directory(demo_dir)) {
      std::vector<std::string> files;
      for (const auto& e : fs::directory_iterator(demo_dir))
        if (e.path().extension() == ".traj") files.push_back(e.path().string());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) demos.push_back(load_trajectory(f));
    }
    if (demos.empty())
      std::cerr << "warning: no demonstrations found; running with an empty "
                   "demo buffer (vanilla-SAC ablation mode)\n";
  }

  TrainOptions opt;
  opt.episodes = episodes;
  opt.seed = g.seed;
  opt.use_demo_buffer = !demos.empty();
  opt.checkpoint_path = g.out_dir + "/best_policy.bin";
  if (stop_at_max) opt.stop_at_tcs = max_achievable_tcs(env.spec());
  TrainResult res = dgsac_train(env, demos, opt);

  CsvWriter curve(g.out_dir + "/curves.csv",
                  {"episode", "reward", "tcs", "entropy", "q_loss",
                   "policy_loss", "alpha"});
  for (const auto& r : res.curve)
    curve.row({double(r.episode), r.reward, r.tcs, r.entropy, r.q_loss,
               r.policy_loss, r.alpha});
  curve.close();
  man.add_output("curves", g.out_dir + "/curves.csv");

  CsvWriter evals(g.out_dir + "/evals.csv",
                  {"episode", "reward", "tcs", "theta_x_deg", "theta_y_deg",
                   "theta_z_deg"});
  for (const auto& e : res.evals)
    evals.row({double(e.episode), e.reward, e.tcs, e.final_euler_deg.x(),
               e.final_euler_deg.y(), e.final_euler_deg.z()});
  evals.close();
  man.add_output("evals", g.out_dir + "/evals.csv");

  res.best.task_id = to_string(env.spec().kind);
  save_trajectory(res.best, g.out_dir + "/best.traj");
  man.add_output("trajectory", g.out_dir + "/best.traj");
  if (fs::exists(opt.checkpoint_path)) man.add_output("checkpoint", opt.checkpoint_path);
  man.note("best_tcs", res.best_tcs);
  man.note("best_avg_reward", res.best_avg_reward);
  man.note("episodes_run", double(res.episodes_run));
  std::cout << "trained " << res.episodes_run << " episodes; best TCS "
            << res.best_tcs << " (max achievable "
            << max_achievable_tcs(env.spec()) << "), best avg reward "
            << res.best_avg_reward << "\n";
  return 0;
}

int cmd_rollout(const GlobalOpts& g, const std::string& scene_path,
                const std::string& traj_path, bool text_frames) {
  fs::create_directories(g.out_dir);
  RunManifest man(g.out_dir, "rollout", g.seed,
                  input_hashes({scene_path, traj_path}));
  Scene scene = load_scene(scene_path, g, g.seed);
  Trajectory traj = load_trajectory(traj_path);
  TaskEnv env(std::move(scene));
  const std::string frames_path = g.out_dir + "/frames.bin";
  TaskEnv::Rollout roll;
  {
    FrameWriter fw(frames_path, env.scene().particles.count(),
                   env.scene().ctx.control_dt(), text_frames);
    roll = env.run(traj, &fw);
  }
  man.add_output("frames", frames_path);
  CsvWriter csv(g.out_dir + "/rewards.csv",
                {"t", "dist", "pour_out", "target", "spill", "collision_penalty",
                 "interaction", "chain", "total", "tcs_delta"});
  for (size_t t = 0; t < roll.steps.size(); ++t) {
    const RewardBreakdown& rb = roll.steps[t];
    csv.row({double(t), rb.dist, rb.pour_out, rb.target, rb.spill,
             rb.collision_penalty, rb.interaction, rb.chain, rb.total(),
             rb.tcs_terms(env.spec().kind)});
  }
  csv.close();
  man.add_output("rewards", g.out_dir + "/rewards.csv");
  man.note("reward", roll.reward);
  man.note("tcs", roll.tcs);
  std::cout << "rollout: reward " << roll.reward << ", TCS " << roll.tcs << "\n";
  return 0;
}

int cmd_chain(const GlobalOpts& g, const std::string& scene_path,
              const std::vector<std::string>& traj_paths) {
  fs::create_directories(g.out_dir);
  std::vector<std::string> inputs{scene_path};
  inputs.insert(inputs.end(), traj_paths.begin(), traj_paths.end());
  RunManifest man(g.out_dir, "chain", g.seed, input_hashes(inputs));

  std::vector<Trajectory> parts;
  for (const auto& p : traj_paths) parts.push_back(load_trajectory(p));
  Trajectory chained = concat_trajectories(parts);
  save_trajectory(chained, g.out_dir + "/chained.traj");
  man.add_output("trajectory", g.out_dir + "/chained.traj");

  Scene scene = load_scene(scene_path, g, g.seed);
  const Vec3 theta_goal = scene.spec.theta_goal_deg;
  TaskEnv env(std::move(scene));
  const std::string frames_path = g.out_dir + "/frames.bin";
  {
    FrameWriter fw(frames_path, env.scene().particles.count(),
                   env.scene().ctx.control_dt(), false);
    env.run(chained, &fw);
  }
  man.add_output("frames", frames_path);

  const FrameDump dump = read_frames(frames_path);
  CsvWriter csv(g.out_dir + "/chain_report.csv",
                {"segment", "start_row", "end_row", "tcs", "reward",
                 "theta_x_deg", "theta_y_deg", "theta_z_deg", "theta_z_goal_deg",
                 "theta_z_rel_err"});
  int start = 0;
  const std::vector<int> bounds =
      chained.boundaries.empty() ? std::vector<int>{chained.rows()}
                                 : chained.boundaries;
  for (size_t sgi = 0; sgi < bounds.size(); ++sgi) {
    const int end = bounds[sgi];
    FrameDump seg;
    seg.npart = dump.npart;
    seg.dt_control = dump.dt_control;
    seg.frames.assign(dump.frames.begin() + start, dump.frames.begin() + end + 1);
    const RolloutScore sc = score_frames(seg, env.scene());
    const Vec3 euler =
        quat_to_euler(seg.frames.back().tool_q.normalized()) * (180.0 / kPi);
    const double gz = theta_goal.z();
    const double rel_err =
        gz != 0 ? std::fabs(wrap_deg(euler.z() - gz)) / std::fabs(gz) : 0.0;
    csv.row({double(sgi), double(start), double(end), sc.tcs, sc.reward,
             euler.x(), euler.y(), euler.z(), gz, rel_err});
    start = end;
  }
  csv.close();
  man.add_output("chain_report", g.out_dir + "/chain_report.csv");
  std::cout << "chained " << parts.size() << " trajectories, horizon "
            << chained.rows() << "; report: " << g.out_dir
            << "/chain_report.csv\n";
  return 0;
}

int cmd_gradcheck(const GlobalOpts& g, const std::string& scene_path,
                  int horizon, double fd_h) {
  fs::create_directories(g.out_dir);
  RunManifest man(g.out_dir, "gradcheck", g.seed, input_hashes({scene_path}));
  Scene scene = load_scene(scene_path, g, g.seed);
  if (horizon > 0) scene.spec.horizon = horizon;
  DwLoss loss;
  loss.weights = scene.spec.dw_weights;
  loss.goal = scene.spec.goal;
  Trajectory traj = Trajectory::zeros(scene.spec.horizon, scene.spec.action_dims,
                                      scene.spec.action_min, scene.spec.action_max);
  const SimState start = SimState::capture(scene);

  CheckpointStore store = record_forward(scene, traj, loss);
  start.restore(scene);
  GradientReport rep = trajectory_gradients(scene, store, traj, loss);
  write_diagnostics_csv(gradient_diagnostics(rep),
                        g.out_dir + "/gradient_report.csv");
  man.add_output("gradient_report", g.out_dir + "/gradient_report.csv");

  if (scene.material.kind == MaterialKind::Granular) {
    // Instability diagnostic: report growth/blow-up instead of FD.
    double first = std::numeric_limits<double>::quiet_NaN(), peak = -1e300;
    for (int t = rep.horizon - 1; t >= 0; --t) {
      if (!rep.finite[t]) continue;
      if (std::isfinite(rep.log10_max[t])) {
        if (!std::isfinite(first)) first = rep.log10_max[t];
        peak = std::max(peak, rep.log10_max[t]);
      }
    }
    const bool nonfinite = !rep.all_finite();
    const double decades = (std::isfinite(first) && peak > -1e300) ? peak - first : 0;
    man.note("nonfinite", nonfinite ? 1.0 : 0.0);
    man.note("growth_decades", decades);
    std::cout << "granular diagnostic: "
              << (nonfinite ? "non-finite gradients" : "finite gradients")
              << ", growth " << decades << " decades\n";
    return 0;
  }

  // finite-difference comparison on the total loss
  CsvWriter csv(g.out_dir + "/fd_compare.csv",
                {"step", "dim", "analytic", "fd", "rel_err"});
  int tested = 0, ok = 0;
  for (int t = 0; t < traj.rows(); ++t)
    for (int d = 0; d < traj.dims; ++d) {
      Trajectory tp = traj, tm = traj;
      tp.row(t)[d] += fd_h;
      tm.row(t)[d] -= fd_h;
      start.restore(scene);
      const double lp = record_forward(scene, tp, loss).total_loss;
      start.restore(scene);
      const double lm = record_forward(scene, tm, loss).total_loss;
      const double fd = (lp - lm) / (2 * fd_h);
      const double an = rep.row(t)[d];
      const double denom = std::max(std::fabs(fd), std::fabs(an));
      const double rel = denom > 0 ? std::fabs(an - fd) / denom : 0.0;
      csv.row({double(t), double(d), an, fd, rel});
      if (std::fabs(an) > 1e-6) {
        ++tested;
        if (rel <= 1e-2) ++ok;
      }
    }
  csv.close();
  man.add_output("fd_compare", g.out_dir + "/fd_compare.csv");
  const double frac = tested ? double(ok) / tested : 1.0;
  man.note("fd_pass_fraction", frac);
  std::cout << "fd check: " << ok << "/" << tested
            << " components within 1e-2 (fraction " << frac << ")\n";
  return 0;
}

int cmd_sweep(const GlobalOpts& g, const std::string& scene_path,
              const std::string& traj_path) {
  fs::create_directories(g.out_dir);
  RunManifest man(g.out_dir, "sweep", g.seed, input_hashes({scene_path, traj_path}));
  Trajectory traj = load_trajectory(traj_path);

  struct Combo {
    double e, nu, phi;
    const char* remark;
  };
  const std::vector<Combo> grid = {
      {1000, 0.2, 30, "Baseline"},      {800, 0.2, 30, "Softer"},
      {900, 0.2, 30, "Softer"},         {1100, 0.2, 30, "Stiffer"},
      {1200, 0.2, 30, "Stiffer"},       {1000, 0.1, 30, "More compressible"},
      {1000, 0.15, 30, "More compressible"},
      {1000, 0.25, 30, "Less compressible"},
      {1000, 0.3, 30, "Less compressible"},
      {1000, 0.2, 20, "Slipperier"},    {1000, 0.2, 25, "Slipperier"},
      {1000, 0.2, 35, "Stickier"},      {1000, 0.2, 40, "Stickier"}};

  std::vector<std::vector<Vec3>> base_track;
  CsvWriter csv(g.out_dir + "/sweep.csv",
                {"youngs_modulus", "poisson_ratio", "friction_angle_deg", "td",
                 "reward", "tcs"});
  for (const Combo& c : grid) {
    ConfigDoc over;
    ConfigSection sec;
    sec.path = "material";
    sec.entries.push_back({format_double(c.e), 0, "youngs_modulus"});
    sec.entries.push_back({format_double(c.nu), 0, "poisson_ratio"});
    sec.entries.push_back({format_double(c.phi), 0, "friction_angle_deg"});
    over.sections.push_back(sec);
    TaskEnv env(load_scene(scene_path, g, g.seed, &over));
    std::vector<std::vector<Vec3>> track;
    const TaskEnv::Rollout roll = env.run(traj, nullptr, &track);
    double td = 0;
    if (base_track.empty()) {
      base_track = std::move(track);
    } else {
      double sum = 0;
      size_t count = 0;
      for (size_t t = 0; t < track.size(); ++t)
        for (size_t i = 0; i < track[t].size(); ++i) {
          sum += (track[t][i] - base_track[t][i]).norm();
          ++count;
        }
      td = count ? sum / double(count) : 0.0;
    }
    csv.row({c.e, c.nu, c.phi, td, roll.reward, roll.tcs});
    std::cout << c.e << "/" << c.nu << "/" << c.phi << ": TD " << td
              << ", reward " << roll.reward << ", TCS " << roll.tcs << " ("
              << c.remark << ")\n";
  }
  csv.close();
  man.add_output("sweep", g.out_dir + "/sweep.csv");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Granular-manipulation simulation, demonstration generation, "
               "and demonstration-guided RL pipeline"};
  app.require_subcommand(1);
  GlobalOpts g;
  app.add_option("--seed", g.seed, "run seed (all randomness derives from it)");
  app.add_flag("--deterministic,!--parallel", g.deterministic,
               "deterministic single-order stepping (default) vs fast parallel");
  app.add_option("--out-dir", g.out_dir, "output directory");
  app.add_option("--config", g.config, "optional config overrides file");

  std::string scene_path, traj_path, demo_dir = "", material;
  std::vector<std::string> traj_paths;
  int ndemos = 3, iterations = 0, episodes = 150, horizon = 0;
  double fd_h = 1e-4;
  bool no_demos = false, stop_at_max = false, text_frames = false;

  auto* c_demogen = app.add_subcommand("demogen", "gradient-based demonstration generation");
  c_demogen->add_option("scene", scene_path)->required();
  c_demogen->add_option("--ndemos", ndemos, "demonstrations to generate");
  c_demogen->add_option("--iterations", iterations, "Adam iterations (0 = scene default)");
  c_demogen->add_option("--material", material,
                        "fluid | elastoplastic (default: scene [demogen] material)");

  auto* c_train = app.add_subcommand("train", "demonstration-guided SAC training");
  c_train->add_option("scene", scene_path)->required();
  c_train->add_option("--demo-dir", demo_dir, "directory of .traj demonstrations");
  c_train->add_option("--episodes", episodes);
  c_train->add_flag("--no-demos", no_demos, "vanilla-SAC ablation");
  c_train->add_flag("--stop-at-max", stop_at_max, "stop once best TCS reaches the task maximum");

  auto* c_chain = app.add_subcommand("chain", "concatenate and execute sub-task trajectories");
  c_chain->add_option("scene", scene_path)->required();
  c_chain->add_option("trajs", traj_paths, "trajectory files in order")->required();

  auto* c_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient comparison / instability diagnostic");
  c_gradcheck->add_option("scene", scene_path)->required();
  c_gradcheck->add_option("--horizon", horizon, "override control-step horizon");
  c_gradcheck->add_option("--fd-h", fd_h, "central-difference step");

  auto* c_sweep = app.add_subcommand("sweep", "material-parameter robustness sweep");
  c_sweep->add_option("scene", scene_path)->required();
  c_sweep->add_option("traj", traj_path)->required();

  auto* c_rollout = app.add_subcommand("rollout", "execute a trajectory and dump frames");
  c_rollout->add_option("scene", scene_path)->required();
  c_rollout->add_option("traj", traj_path)->required();
  c_rollout->add_flag("--text-frames", text_frames, "text frame dump instead of binary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(c_demogen))
      return cmd_demogen(g, scene_path, ndemos, iterations, material);
    if (app.got_subcommand(c_train))
      return cmd_train(g, scene_path, demo_dir, episodes, no_demos, stop_at_max);
    if (app.got_subcommand(c_chain)) return cmd_chain(g, scene_path, traj_paths);
    if (app.got_subcommand(c_gradcheck))
      return cmd_gradcheck(g, scene_path, horizon, fd_h);
    if (app.got_subcommand(c_sweep)) return cmd_sweep(g, scene_path, traj_path);
    if (app.got_subcommand(c_rollout))
      return cmd_rollout(g, scene_path, traj_path, text_frames);
  } catch (const StepError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
