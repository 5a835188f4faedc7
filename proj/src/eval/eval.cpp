#include "cnav/eval/eval.hpp"

#include <cstdio>
#include <filesystem>
#include <thread>

#include "cnav/ad/checkpoint.hpp"
#include "cnav/sim/scenario.hpp"
#include "cnav/sim/world.hpp"

namespace cnav::eval {

Vec2 LearnedPolicy::act(const sim::Observation& obs, const sim::WorldState& world) {
  sim::Observation quantized = obs;
  for (auto& v : quantized.robot) v = static_cast<double>(static_cast<float>(v));
  for (auto& v : quantized.peds) v = static_cast<double>(static_cast<float>(v));
  history_.push_back(std::move(quantized));
  while (history_.size() > net::NetConfig::kHistoryLen) history_.pop_front();

  ad::NoGradGuard ng;
  const std::vector<sim::Observation> window(history_.begin(), history_.end());
  const ad::Tensor joint_single = net::build_joint_state(window);
  const auto& s = joint_single.shape();
  const ad::Tensor joint = ad::reshape(joint_single, {1, s[0], s[1], s[2]});
  std::vector<double> robot_row(history_.back().robot.begin(), history_.back().robot.end());
  const ad::Tensor robot =
      ad::Tensor::constant({1, sim::Observation::kRobotDim}, std::move(robot_row));
  // The network acts in the observation's goal-aligned frame.
  Vec2 action =
      sim::from_goal_frame(network_->distribution(joint, robot).mean, sim::goal_frame_angle(world));

  // The robot cannot exceed its preferred speed; the behavior policy's
  // actions obey the same bound, so the training data never leaves it.
  const double limit = history_.back().robot[1];
  const double speed = action.norm();
  if (speed > limit) action = action * (limit / speed);
  return action;
}

LoadedPolicy load_policy_checkpoint(const std::string& path) {
  const auto blocks = ad::load_checkpoint(path);
  auto meta = [&blocks, &path](const std::string& name) {
    for (const auto& b : blocks)
      if (b.name == name) return b.values.at(0);
    throw ad::CheckpointError("checkpoint " + path + " is missing block " + name);
  };

  LoadedPolicy out;
  out.net_config.embed_dim = static_cast<int>(meta("meta.embed_dim"));
  out.net_config.head_count = static_cast<int>(meta("meta.head_count"));
  out.net_config.fnn_hidden = static_cast<int>(meta("meta.fnn_hidden"));
  out.net_config.head_hidden = static_cast<int>(meta("meta.head_hidden"));
  out.human_count = static_cast<int>(meta("meta.human_count"));
  const int mode_code = static_cast<int>(meta("meta.mode"));
  out.mode = mode_code == 0 ? "st2orl" : (mode_code == 1 ? "iqlflat" : "bc");

  Rng init_rng(0);
  const net::EncoderKind enc =
      mode_code == 1 ? net::EncoderKind::Flat : net::EncoderKind::St2;
  out.network = std::make_shared<net::PolicyNetwork>(out.net_config, enc, out.human_count,
                                                     init_rng);
  ad::restore_params(blocks, out.network->params("pi"));
  return out;
}

namespace {

struct EpisodeResult {
  sim::Termination outcome = sim::Termination::Running;
  int steps = 0;
  double reward = 0.0;
};

EpisodeResult run_episode(Policy& policy, const SuiteOptions& opts, int index) {
  Rng rng(opts.base_seed + static_cast<uint64_t>(index));
  sim::WorldState world = sim::spawn_scenario(opts.scenario, rng);
  policy.reset();

  sim::Trajectory traj = sim::trajectory_begin(world);
  EpisodeResult result;
  while (world.status == sim::Termination::Running) {
    const sim::Observation obs = sim::observe(world);
    const Vec2 action = policy.act(obs, world);
    const sim::StepOutcome outcome = sim::step(world, action, rng);
    result.reward += outcome.reward;
    if (opts.dump_dir) sim::trajectory_append(traj, world, outcome.reward, outcome.termination);
  }
  result.outcome = world.status;
  result.steps = world.step_index;

  if (opts.dump_dir) {
    char name[64];
    std::snprintf(name, sizeof(name), "episode_%04d.cnavtraj", index);
    sim::save_trajectory(traj, *opts.dump_dir + "/" + name);
  }
  return result;
}

}  // namespace

EvalReport run_suite(Policy& policy, const SuiteOptions& opts) {
  if (opts.episodes <= 0) throw EvalError("run_suite: episode count must be positive");
  if (opts.dump_dir) std::filesystem::create_directories(*opts.dump_dir);

  std::vector<EpisodeResult> results(opts.episodes);
  const int jobs = std::max(1, std::min(opts.jobs, opts.episodes));
  if (jobs == 1) {
    for (int i = 0; i < opts.episodes; ++i) results[i] = run_episode(policy, opts, i);
  } else {
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        const auto own_policy = policy.clone();
        for (int i = w; i < opts.episodes; i += jobs)
          results[i] = run_episode(*own_policy, opts, i);
      });
    }
    for (auto& worker : workers) worker.join();
  }

  // Reduction in episode-index order, independent of the worker count.
  EvalReport report;
  report.episode_count = opts.episodes;
  int64_t successes = 0, collisions = 0, timeouts = 0, success_steps = 0;
  double reward_sum = 0.0;
  for (const auto& r : results) {
    reward_sum += r.reward;
    switch (r.outcome) {
      case sim::Termination::ReachGoal:
        successes += 1;
        success_steps += r.steps;
        break;
      case sim::Termination::Collision: collisions += 1; break;
      case sim::Termination::Timeout: timeouts += 1; break;
      case sim::Termination::Running: break;
    }
  }
  const double n = static_cast<double>(opts.episodes);
  report.success_rate = successes / n;
  report.collision_rate = collisions / n;
  report.timeout_rate = timeouts / n;
  report.avg_success_time =
      successes > 0 ? success_steps * sim::kTimeStep / static_cast<double>(successes) : 0.0;
  report.avg_reward = reward_sum / n;
  if (opts.training_transitions)
    report.efficiency = efficiency(report.avg_reward, *opts.training_transitions);
  return report;
}

double efficiency(double avg_reward, int64_t total_training_transitions) {
  if (total_training_transitions <= 0)
    throw EvalError("efficiency: total training transitions must be positive");
  return avg_reward / static_cast<double>(total_training_transitions) * 1e5;
}

std::string format_eval_report(const EvalReport& r, const std::string& label) {
  char buf[512];
  std::string eff = r.efficiency ? [&] {
    char e[32];
    std::snprintf(e, sizeof(e), "%10.3f", *r.efficiency);
    return std::string(e);
  }() : std::string("         -");
  std::snprintf(buf, sizeof(buf),
                "%-10s %8s %10s %8s %8s %8s %10s\n"
                "%-10s %7.1f%% %9.1f%% %7.1f%% %7.1fs %8.3f %s\n",
                "method", "success", "collision", "timeout", "time", "reward", "efficiency",
                label.c_str(), 100.0 * r.success_rate, 100.0 * r.collision_rate,
                100.0 * r.timeout_rate, r.avg_success_time, r.avg_reward, eff.c_str());
  std::string out = buf;
  std::snprintf(buf, sizeof(buf),
                "success_rate %.6f\ncollision_rate %.6f\ntimeout_rate %.6f\n"
                "avg_success_time %.6f\navg_reward %.6f\nepisode_count %d\n",
                r.success_rate, r.collision_rate, r.timeout_rate, r.avg_success_time,
                r.avg_reward, r.episode_count);
  out += buf;
  if (r.efficiency) {
    std::snprintf(buf, sizeof(buf), "efficiency %.6f\n", *r.efficiency);
    out += buf;
  }
  return out;
}

}  // namespace cnav::eval
