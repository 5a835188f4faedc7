#pragma once

#include <string>
#include <vector>

#include "cnav/sim/types.hpp"

namespace cnav::sim {

struct TrajectoryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One post-step record.
struct TrajectoryStep {
  int step_index = 0;
  Vec2 robot;
  std::vector<Vec2> pedestrians;
  double reward = 0.0;
  Termination termination = Termination::Running;
};

struct Trajectory {
  double robot_radius = 0.3;
  double ped_radius = 0.3;
  Vec2 start;
  Vec2 goal;
  std::vector<Vec2> ped_starts;
  std::vector<TrajectoryStep> steps;

  int human_count() const { return static_cast<int>(ped_starts.size()); }
  Termination outcome() const {
    return steps.empty() ? Termination::Running : steps.back().termination;
  }
  double cumulative_reward() const {
    double sum = 0.0;
    for (const auto& s : steps) sum += s.reward;
    return sum;
  }
};

Trajectory trajectory_begin(const WorldState& world);
void trajectory_append(Trajectory& traj, const WorldState& world, double reward,
                       Termination termination);

// Line-delimited text; doubles round-trip exactly.
std::string serialize_trajectory(const Trajectory& traj);
Trajectory parse_trajectory(const std::string& text);

void save_trajectory(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory(const std::string& path);

}  // namespace cnav::sim
