#pragma once

#include "cnav/rng.hpp"
#include "cnav/sim/types.hpp"

namespace cnav::sim {

inline constexpr double kDangerZone = 0.2;       // m, discomfort distance in the reward
inline constexpr double kCollisionPenalty = -0.25;
inline constexpr double kGoalReward = 1.0;

// Robot-centric observation of the current world, expressed in the frame
// whose x-axis points from the robot to its goal. Actions paired with
// observations (dataset records, learned-policy outputs) live in this
// frame; the simulator itself works in world coordinates.
Observation observe(const WorldState& world);

// Angle of the goal-aligned frame and the rotations into and out of it.
double goal_frame_angle(const WorldState& world);
Vec2 to_goal_frame(const Vec2& v, double frame_angle);
Vec2 from_goal_frame(const Vec2& v, double frame_angle);

// Piecewise reward, evaluated top-down: collision, danger zone, goal,
// then progress toward the goal.
double reward(double d_min_t, double d_g_t, double d_g_prev, double robot_radius);

// Advances the world by one time step: the robot executes `robot_action`
// as a velocity, pedestrians follow reciprocal collision avoidance among
// themselves (the robot is invisible to them), and pedestrians that reach
// their goal draw a fresh one. Throws SimError when called on a world
// that already terminated.
StepOutcome step(WorldState& world, const Vec2& robot_action, Rng& rng);

// Gap distance from the robot to the nearest pedestrian (+inf with none).
double min_gap_distance(const WorldState& world);

}  // namespace cnav::sim
