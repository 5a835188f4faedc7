#pragma once

#include <vector>

#include "cnav/geom.hpp"
#include "cnav/sim/types.hpp"

namespace cnav::orca {

struct OrcaParams {
  double time_horizon = 5.0;    // s, anticipation window for non-colliding pairs
  double neighbor_dist = 10.0;  // m, agents farther than this are ignored
  double max_speed = 1.0;       // m/s, LP disc radius
  double safety_space = 0.0;    // m, additive inflation of each pairwise gap
};

// The crowd-nav stack this environment descends from pads every agent
// radius by safety_space + 0.01 on both sides of a pair; a configured
// safety space of 0.2 therefore widens each robot-pedestrian gap by 0.42.
OrcaParams robot_behavior_params(double safety_space);

// Pedestrian pairs carry only the stock 0.01-per-agent numerical margin.
OrcaParams pedestrian_params();

// Boundary line of a permitted half-plane in velocity space; the
// permitted side lies to the left of `direction`.
struct HalfPlaneConstraint {
  Vec2 point;
  Vec2 direction;
};

// Goal-directed velocity, capped so the agent does not overshoot the
// goal within one step.
Vec2 preferred_velocity(const sim::AgentKinematics& agent, double dt = sim::kTimeStep);

// One constraint per neighbor within neighbor_dist. `responsibility` is
// the share of the avoidance this agent takes: 0.5 for reciprocal pairs,
// 1.0 when the other side does not react (the invisible robot).
std::vector<HalfPlaneConstraint> build_orca_lines(const sim::AgentKinematics& self,
                                                  const std::vector<sim::AgentKinematics>& neighbors,
                                                  const OrcaParams& params,
                                                  double responsibility = 0.5,
                                                  double dt = sim::kTimeStep);

// Velocity closest to v_pref inside the constraint intersection and the
// max_speed disc; falls back to the least-violating velocity when the
// feasible region is empty. Reports feasibility through `feasible`.
Vec2 solve_velocity(const std::vector<HalfPlaneConstraint>& lines, const Vec2& v_pref,
                    double max_speed, bool* feasible = nullptr);

Vec2 orca_policy(const sim::AgentKinematics& self,
                 const std::vector<sim::AgentKinematics>& neighbors, const OrcaParams& params,
                 double responsibility = 0.5, double dt = sim::kTimeStep);

}  // namespace cnav::orca
