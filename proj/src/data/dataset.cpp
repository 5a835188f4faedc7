#include "cnav/data/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "cnav/orca/orca.hpp"
#include "cnav/rng.hpp"
#include "cnav/sim/scenario.hpp"
#include "cnav/sim/world.hpp"

namespace cnav::data {

namespace {

constexpr char kMagic[8] = {'C', 'N', 'A', 'V', 'D', 'S', '0', '1'};
constexpr uint32_t kVersion = 1;

std::vector<float> quantize(const sim::Observation& obs) {
  std::vector<float> out;
  out.reserve(sim::Observation::kRobotDim + obs.peds.size());
  for (double v : obs.robot) out.push_back(static_cast<float>(v));
  for (double v : obs.peds) out.push_back(static_cast<float>(v));
  return out;
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, int64_t& offset, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is)
    throw FormatError(std::string("dataset truncated at byte ") + std::to_string(offset) +
                      " while reading " + what);
  offset += sizeof(T);
  return v;
}

void read_block(std::istream& is, int64_t& offset, float* dst, int64_t count, const char* what) {
  is.read(reinterpret_cast<char*>(dst), count * static_cast<int64_t>(sizeof(float)));
  if (!is)
    throw FormatError(std::string("dataset truncated at byte ") + std::to_string(offset) +
                      " in " + what + " column");
  offset += count * static_cast<int64_t>(sizeof(float));
}

}  // namespace

Dataset::Dataset(int human_count, std::vector<Transition> transitions)
    : human_count_(human_count), transitions_(std::move(transitions)) {
  index_episodes();
}

void Dataset::index_episodes() {
  step_in_episode_.resize(transitions_.size());
  int step = 0;
  for (size_t i = 0; i < transitions_.size(); ++i) {
    step_in_episode_[i] = step;
    step = transitions_[i].termination == sim::Termination::Running ? step + 1 : 0;
  }
}

Dataset collect(const CollectConfig& config) {
  if (config.capacity == 0) throw std::invalid_argument("collect: capacity must be positive");
  Rng rng(config.rng_seed);

  orca::OrcaParams behavior = orca::robot_behavior_params(config.behavior_safety_space);

  std::vector<Transition> transitions;
  transitions.reserve(config.capacity);

  while (transitions.size() < config.capacity) {
    sim::WorldState world = sim::spawn_scenario(config.scenario, rng);
    sim::Observation obs = sim::observe(world);

    while (world.status == sim::Termination::Running &&
           transitions.size() < config.capacity) {
      behavior.max_speed = world.robot.kin.pref_speed;
      Vec2 action = orca::orca_policy(world.robot.kin, world.pedestrians, behavior);
      action.x += rng.normal(0.0, config.noise_std);
      action.y += rng.normal(0.0, config.noise_std);
      const double speed = action.norm();
      if (speed > behavior.max_speed) action = action * (behavior.max_speed / speed);

      // Stored in the same goal-aligned frame as the paired observation.
      const Vec2 frame_action = sim::to_goal_frame(action, sim::goal_frame_angle(world));

      const sim::StepOutcome outcome = sim::step(world, action, rng);
      const sim::Observation next_obs = sim::observe(world);

      Transition tr;
      tr.obs = quantize(obs);
      tr.action = {static_cast<float>(frame_action.x), static_cast<float>(frame_action.y)};
      tr.reward = static_cast<float>(outcome.reward);
      tr.next_obs = quantize(next_obs);
      tr.termination = outcome.termination;
      transitions.push_back(std::move(tr));

      obs = next_obs;
    }
  }
  return Dataset(config.scenario.human_count, std::move(transitions));
}

void save(const Dataset& dataset, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kVersion);
  write_pod(os, static_cast<uint32_t>(dataset.human_count()));
  write_pod(os, static_cast<uint32_t>(sim::Observation::kRobotDim));
  write_pod(os, static_cast<uint32_t>(sim::Observation::kPedDim));
  write_pod(os, static_cast<uint64_t>(dataset.size()));

  for (const auto& t : dataset.transitions())
    os.write(reinterpret_cast<const char*>(t.obs.data()),
             static_cast<std::streamsize>(t.obs.size() * sizeof(float)));
  for (const auto& t : dataset.transitions())
    os.write(reinterpret_cast<const char*>(t.action.data()), 2 * sizeof(float));
  for (const auto& t : dataset.transitions()) write_pod(os, t.reward);
  for (const auto& t : dataset.transitions())
    os.write(reinterpret_cast<const char*>(t.next_obs.data()),
             static_cast<std::streamsize>(t.next_obs.size() * sizeof(float)));
  for (const auto& t : dataset.transitions())
    write_pod(os, static_cast<uint8_t>(t.termination));
  if (!os) throw FormatError("write failure on " + path);
}

Dataset load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  int64_t offset = 0;

  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError("bad dataset magic at byte 0 in " + path);
  offset += sizeof(magic);

  const auto version = read_pod<uint32_t>(is, offset, "version");
  if (version != kVersion)
    throw FormatError("unsupported dataset version " + std::to_string(version) + " at byte 8");
  const auto humans = read_pod<uint32_t>(is, offset, "human count");
  const auto robot_dim = read_pod<uint32_t>(is, offset, "robot dim");
  const auto ped_dim = read_pod<uint32_t>(is, offset, "ped dim");
  if (robot_dim != sim::Observation::kRobotDim || ped_dim != sim::Observation::kPedDim)
    throw FormatError("dataset layout " + std::to_string(robot_dim) + "/" +
                      std::to_string(ped_dim) + " not supported (expected 6/7)");
  const auto count = read_pod<uint64_t>(is, offset, "transition count");
  const int64_t obs_dim = robot_dim + static_cast<int64_t>(humans) * ped_dim;

  std::vector<Transition> transitions(count);
  for (auto& t : transitions) {
    t.obs.resize(obs_dim);
    read_block(is, offset, t.obs.data(), obs_dim, "obs");
  }
  for (auto& t : transitions) read_block(is, offset, t.action.data(), 2, "action");
  for (auto& t : transitions) t.reward = read_pod<float>(is, offset, "reward");
  for (auto& t : transitions) {
    t.next_obs.resize(obs_dim);
    read_block(is, offset, t.next_obs.data(), obs_dim, "next_obs");
  }
  for (auto& t : transitions) {
    const auto code = read_pod<uint8_t>(is, offset, "termination");
    if (code > 3)
      throw FormatError("invalid termination code " + std::to_string(int(code)) + " at byte " +
                        std::to_string(offset - 1));
    t.termination = static_cast<sim::Termination>(code);
  }
  // Trailing bytes mean the declared length is wrong.
  char extra;
  if (is.read(&extra, 1))
    throw FormatError("dataset has trailing bytes past declared payload at byte " +
                      std::to_string(offset));
  return Dataset(static_cast<int>(humans), std::move(transitions));
}

DatasetStats stats(const Dataset& dataset) {
  DatasetStats out;
  out.transition_count = dataset.size();

  int64_t successes = 0, collisions = 0, timeouts = 0;
  int64_t success_steps = 0;
  double reward_sum = 0.0;
  double episode_reward = 0.0;
  int64_t episode_len = 0;

  for (int64_t i = 0; i < dataset.size(); ++i) {
    const auto& t = dataset[i];
    episode_reward += t.reward;
    episode_len += 1;
    if (t.termination == sim::Termination::Running) continue;

    out.episode_count += 1;
    reward_sum += episode_reward;
    switch (t.termination) {
      case sim::Termination::ReachGoal:
        successes += 1;
        success_steps += episode_len;
        break;
      case sim::Termination::Collision: collisions += 1; break;
      case sim::Termination::Timeout: timeouts += 1; break;
      case sim::Termination::Running: break;
    }
    episode_reward = 0.0;
    episode_len = 0;
  }

  if (out.episode_count == 0)
    throw StatsError("stats: dataset holds no complete episode");

  const double n = static_cast<double>(out.episode_count);
  out.success_rate = successes / n;
  out.collision_rate = collisions / n;
  out.timeout_rate = timeouts / n;
  out.avg_success_time =
      successes > 0 ? success_steps * sim::kTimeStep / static_cast<double>(successes) : 0.0;
  out.avg_cumulative_reward = reward_sum / n;
  return out;
}

std::string format_stats(const DatasetStats& s, const std::string& label) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%-10s %8s %10s %8s %8s %10s\n"
                "%-10s %7.1f%% %9.1f%% %7.1fs %8.3f %10lld\n",
                "dataset", "success", "collision", "time", "reward", "capacity", label.c_str(),
                100.0 * s.success_rate, 100.0 * s.collision_rate, s.avg_success_time,
                s.avg_cumulative_reward, static_cast<long long>(s.transition_count));
  std::string out = buf;
  std::snprintf(buf, sizeof(buf),
                "success_rate %.6f\ncollision_rate %.6f\ntimeout_rate %.6f\n"
                "avg_success_time %.6f\navg_cumulative_reward %.6f\n"
                "episode_count %lld\ntransition_count %lld\n",
                s.success_rate, s.collision_rate, s.timeout_rate, s.avg_success_time,
                s.avg_cumulative_reward, static_cast<long long>(s.episode_count),
                static_cast<long long>(s.transition_count));
  return out + buf;
}

}  // namespace cnav::data
