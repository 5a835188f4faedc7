#include "cnav/sim/world.hpp"

#include <cmath>
#include <limits>

#include "cnav/orca/orca.hpp"
#include "cnav/sim/scenario.hpp"

namespace cnav::sim {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::Running: return "running";
    case Termination::ReachGoal: return "goal";
    case Termination::Collision: return "collision";
    case Termination::Timeout: return "timeout";
  }
  return "unknown";
}

Termination termination_from_name(const std::string& name) {
  if (name == "running") return Termination::Running;
  if (name == "goal") return Termination::ReachGoal;
  if (name == "collision") return Termination::Collision;
  if (name == "timeout") return Termination::Timeout;
  throw SimError("unknown termination name: " + name);
}

double goal_frame_angle(const WorldState& world) {
  const Vec2 to_goal = world.robot.kin.goal - world.robot.kin.position;
  return std::atan2(to_goal.y, to_goal.x);
}

Vec2 to_goal_frame(const Vec2& v, double frame_angle) {
  const double c = std::cos(frame_angle), s = std::sin(frame_angle);
  return {c * v.x + s * v.y, -s * v.x + c * v.y};
}

Vec2 from_goal_frame(const Vec2& v, double frame_angle) {
  const double c = std::cos(frame_angle), s = std::sin(frame_angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

namespace {

double wrap_angle(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a <= -kPi) a += 2.0 * kPi;
  return a;
}

}  // namespace

Observation observe(const WorldState& world) {
  Observation obs;
  const auto& robot = world.robot.kin;
  const double d_g = distance(robot.goal, robot.position);
  // Robot-centric frame with the x-axis toward the goal: absolute
  // position and orientation drop out of the state.
  const double frame = goal_frame_angle(world);
  const Vec2 v = to_goal_frame(robot.velocity, frame);
  obs.robot = {d_g,          robot.pref_speed,
               wrap_angle(world.robot.heading - frame), robot.radius,
               v.x,          v.y};

  obs.peds.resize(world.pedestrians.size() * Observation::kPedDim);
  for (size_t n = 0; n < world.pedestrians.size(); ++n) {
    const auto& ped = world.pedestrians[n];
    const Vec2 rel_pos = to_goal_frame(ped.position - robot.position, frame);
    const Vec2 rel_vel = to_goal_frame(ped.velocity - robot.velocity, frame);
    double* row = obs.peds.data() + n * Observation::kPedDim;
    row[0] = rel_pos.x;
    row[1] = rel_pos.y;
    row[2] = rel_vel.x;
    row[3] = rel_vel.y;
    row[4] = ped.radius;
    row[5] = rel_pos.norm();
    row[6] = robot.radius + ped.radius;
  }
  return obs;
}

double reward(double d_min_t, double d_g_t, double d_g_prev, double robot_radius) {
  if (d_min_t <= 0.0) return kCollisionPenalty;
  if (d_min_t < kDangerZone) return d_min_t - kDangerZone;
  if (d_g_t <= robot_radius) return kGoalReward;
  return d_g_prev - d_g_t;
}

double min_gap_distance(const WorldState& world) {
  double d_min = std::numeric_limits<double>::infinity();
  const auto& robot = world.robot.kin;
  for (const auto& ped : world.pedestrians) {
    const double gap = distance(robot.position, ped.position) - robot.radius - ped.radius;
    d_min = std::min(d_min, gap);
  }
  return d_min;
}

StepOutcome step(WorldState& world, const Vec2& robot_action, Rng& rng) {
  if (world.status != Termination::Running)
    throw SimError("step() called on a terminated world");
  if (!std::isfinite(robot_action.x) || !std::isfinite(robot_action.y))
    throw SimError("step() requires a finite action");

  const double d_g_prev = distance(world.robot.kin.goal, world.robot.kin.position);

  // Pedestrian velocities from the pre-step state; the robot is not in
  // anyone's neighbor list.
  orca::OrcaParams ped_params = orca::pedestrian_params();
  std::vector<Vec2> ped_velocities(world.pedestrians.size());
  std::vector<AgentKinematics> neighbors;
  neighbors.reserve(world.pedestrians.size());
  for (size_t i = 0; i < world.pedestrians.size(); ++i) {
    neighbors.clear();
    for (size_t j = 0; j < world.pedestrians.size(); ++j)
      if (j != i) neighbors.push_back(world.pedestrians[j]);
    ped_params.max_speed = world.pedestrians[i].pref_speed;
    ped_velocities[i] = orca::orca_policy(world.pedestrians[i], neighbors, ped_params);
  }

  // Simultaneous update.
  world.robot.kin.position += robot_action * kTimeStep;
  world.robot.kin.velocity = robot_action;
  world.robot.heading = std::atan2(robot_action.y, robot_action.x);
  for (size_t i = 0; i < world.pedestrians.size(); ++i) {
    world.pedestrians[i].position += ped_velocities[i] * kTimeStep;
    world.pedestrians[i].velocity = ped_velocities[i];
  }

  world.step_index += 1;
  world.time = world.step_index * kTimeStep;

  StepOutcome outcome;
  outcome.d_min = min_gap_distance(world);
  const double d_g = distance(world.robot.kin.goal, world.robot.kin.position);
  outcome.reward = reward(outcome.d_min, d_g, d_g_prev, world.robot.kin.radius);

  if (outcome.d_min <= 0.0)
    outcome.termination = Termination::Collision;
  else if (d_g <= world.robot.kin.radius)
    outcome.termination = Termination::ReachGoal;
  else if (world.time >= world.scenario.time_limit)
    outcome.termination = Termination::Timeout;
  else
    outcome.termination = Termination::Running;
  world.status = outcome.termination;

  // Pedestrians that arrived pick a fresh goal.
  for (size_t i = 0; i < world.pedestrians.size(); ++i) {
    auto& ped = world.pedestrians[i];
    if (distance(ped.position, ped.goal) < ped.radius)
      ped.goal = regenerate_goal(world, static_cast<int>(i), rng);
  }
  return outcome;
}

}  // namespace cnav::sim
