#pragma once

#include "cnav/rng.hpp"
#include "cnav/sim/types.hpp"

namespace cnav::sim {

// Places the robot on the south rim heading north and spawns the
// configured pedestrians with clearance checks against every already
// placed start and goal. Throws SimError after the retry cap.
WorldState spawn_scenario(const ScenarioConfig& config, Rng& rng);

// Fresh goal for a pedestrian that reached its current one, drawn from
// its own crossing region and clearance-checked against the other agents.
Vec2 regenerate_goal(const WorldState& world, int ped_index, Rng& rng);

}  // namespace cnav::sim
