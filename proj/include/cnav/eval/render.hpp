#pragma once

#include <string>

#include "cnav/sim/trajectory.hpp"

namespace cnav::eval {

// Deterministic standalone SVG: robot path in black, pedestrian paths in
// distinct colors, waypoints time-stamped every second.
std::string render_trajectory_svg(const sim::Trajectory& traj);

void render_trajectory_file(const sim::Trajectory& traj, const std::string& out_path);

}  // namespace cnav::eval
