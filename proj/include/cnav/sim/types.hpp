#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cnav/geom.hpp"

namespace cnav::sim {

inline constexpr double kTimeStep = 0.25;  // s

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Termination : uint8_t { Running = 0, ReachGoal = 1, Collision = 2, Timeout = 3 };

const char* termination_name(Termination t);
Termination termination_from_name(const std::string& name);

struct AgentKinematics {
  Vec2 position;
  Vec2 velocity;
  double radius = 0.3;      // m
  double pref_speed = 1.0;  // m/s
  Vec2 goal;

  bool operator==(const AgentKinematics&) const = default;
};

struct RobotState {
  AgentKinematics kin;
  double heading = 0.0;  // rad, in (-pi, pi]

  bool operator==(const RobotState&) const = default;
};

enum class ScenarioKind : uint8_t { Simple = 0, Complex = 1 };

// Crossing pattern a pedestrian keeps for goal regeneration.
enum class CrossingKind : uint8_t { Circle = 0, Square = 1 };

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::Simple;
  int human_count = 6;
  double circle_radius = 4.0;  // m
  double square_side = 10.0;   // m
  uint64_t rng_seed = 0;
  double time_limit = 50.0;  // s

  static ScenarioConfig simple() { return {}; }
  static ScenarioConfig complex() {
    ScenarioConfig c;
    c.kind = ScenarioKind::Complex;
    c.human_count = 9;
    return c;
  }

  bool operator==(const ScenarioConfig&) const = default;
};

struct WorldState {
  RobotState robot;
  std::vector<AgentKinematics> pedestrians;
  std::vector<CrossingKind> ped_kinds;
  ScenarioConfig scenario;
  double time = 0.0;
  int step_index = 0;
  Termination status = Termination::Running;

  bool operator==(const WorldState&) const = default;
};

// Robot-centric learning input: the robot row [d_g, v_pre, psi, r, v_x, v_y]
// and one [px~, py~, vx~, vy~, r_n, d_n, r + r_n] row per pedestrian.
struct Observation {
  static constexpr int kRobotDim = 6;
  static constexpr int kPedDim = 7;

  std::array<double, kRobotDim> robot{};
  std::vector<double> peds;  // H * kPedDim, row-major

  int human_count() const { return static_cast<int>(peds.size()) / kPedDim; }
  const double* ped_row(int n) const { return peds.data() + n * kPedDim; }

  bool operator==(const Observation&) const = default;
};

struct StepOutcome {
  double reward = 0.0;
  Termination termination = Termination::Running;
  double d_min = 0.0;  // m, gap distance to nearest pedestrian after the step
};

}  // namespace cnav::sim
