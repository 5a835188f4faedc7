#include "cnav/sim/scenario.hpp"

#include <cmath>

namespace cnav::sim {

namespace {

constexpr double kSpawnClearance = 0.2;  // m, beyond summed radii
constexpr double kPositionJitter = 0.5;  // m, per axis on circle points
constexpr int kMaxRetries = 1000;
constexpr double kTau = 6.28318530717958647692;

constexpr double kAgentRadius = 0.3;
constexpr double kPrefSpeed = 1.0;

struct Placement {
  Vec2 position;
  Vec2 goal;
  double radius;
};

bool clear_of(const Vec2& candidate, double radius, const std::vector<Placement>& placed) {
  for (const auto& p : placed) {
    const double min_dist = radius + p.radius + kSpawnClearance;
    if (distance(candidate, p.position) < min_dist) return false;
    if (distance(candidate, p.goal) < min_dist) return false;
  }
  return true;
}

Vec2 circle_point(double circle_radius, Rng& rng) {
  const double angle = rng.uniform() * kTau;
  return {circle_radius * std::cos(angle) + rng.uniform(-kPositionJitter, kPositionJitter),
          circle_radius * std::sin(angle) + rng.uniform(-kPositionJitter, kPositionJitter)};
}

}  // namespace

WorldState spawn_scenario(const ScenarioConfig& config, Rng& rng) {
  if (config.kind == ScenarioKind::Simple &&
      (config.human_count != 6 || config.circle_radius != 4.0))
    throw SimError("simple scenario requires 6 pedestrians on a 4 m circle");
  if (config.kind == ScenarioKind::Complex &&
      (config.human_count != 9 || config.square_side != 10.0))
    throw SimError("complex scenario requires 9 pedestrians and a 10 m square");

  WorldState world;
  world.scenario = config;
  world.robot.kin.radius = kAgentRadius;
  world.robot.kin.pref_speed = kPrefSpeed;
  world.robot.kin.position = {0.0, -config.circle_radius};
  world.robot.kin.goal = {0.0, config.circle_radius};
  world.robot.kin.velocity = {0.0, 0.0};
  const Vec2 to_goal = world.robot.kin.goal - world.robot.kin.position;
  world.robot.heading = std::atan2(to_goal.y, to_goal.x);

  std::vector<Placement> placed;
  placed.push_back({world.robot.kin.position, world.robot.kin.goal, world.robot.kin.radius});

  for (int n = 0; n < config.human_count; ++n) {
    AgentKinematics ped;
    ped.radius = kAgentRadius;
    ped.pref_speed = kPrefSpeed;
    ped.velocity = {0.0, 0.0};

    CrossingKind kind = CrossingKind::Circle;
    if (config.kind == ScenarioKind::Complex)
      kind = rng.uniform() < 0.5 ? CrossingKind::Circle : CrossingKind::Square;

    bool ok = false;
    if (kind == CrossingKind::Circle) {
      for (int attempt = 0; attempt < kMaxRetries && !ok; ++attempt) {
        const Vec2 start = circle_point(config.circle_radius, rng);
        const Vec2 goal = -start;
        if (clear_of(start, ped.radius, placed) && clear_of(goal, ped.radius, placed)) {
          ped.position = start;
          ped.goal = goal;
          ok = true;
        }
      }
    } else {
      const double half = config.square_side / 2.0;
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      for (int attempt = 0; attempt < kMaxRetries && !ok; ++attempt) {
        const Vec2 start{sign * rng.uniform() * half, rng.uniform(-half, half)};
        if (clear_of(start, ped.radius, placed)) {
          ped.position = start;
          ok = true;
        }
      }
      if (ok) {
        ok = false;
        for (int attempt = 0; attempt < kMaxRetries && !ok; ++attempt) {
          const Vec2 goal{-sign * rng.uniform() * half, rng.uniform(-half, half)};
          if (clear_of(goal, ped.radius, placed)) {
            ped.goal = goal;
            ok = true;
          }
        }
      }
    }
    if (!ok)
      throw SimError("scenario generation failed: no clear placement for pedestrian " +
                     std::to_string(n) + " after " + std::to_string(kMaxRetries) + " retries");

    placed.push_back({ped.position, ped.goal, ped.radius});
    world.pedestrians.push_back(ped);
    world.ped_kinds.push_back(kind);
  }
  return world;
}

Vec2 regenerate_goal(const WorldState& world, int ped_index, Rng& rng) {
  const auto& ped = world.pedestrians[ped_index];
  std::vector<Placement> placed;
  placed.push_back({world.robot.kin.position, world.robot.kin.goal, world.robot.kin.radius});
  for (int i = 0; i < static_cast<int>(world.pedestrians.size()); ++i) {
    if (i == ped_index) continue;
    placed.push_back(
        {world.pedestrians[i].position, world.pedestrians[i].goal, world.pedestrians[i].radius});
  }

  const auto& cfg = world.scenario;
  if (world.ped_kinds[ped_index] == CrossingKind::Circle) {
    // Antipode of the current spot keeps circle traffic crossing the
    // center, matching the initial start/goal structure.
    const Vec2 base = -ped.position;
    const double scale = base.norm() > 0.0 ? cfg.circle_radius / base.norm() : 1.0;
    const Vec2 rim = base * scale;
    for (int attempt = 0; attempt < 50; ++attempt) {
      const Vec2 goal{rim.x + rng.uniform(-kPositionJitter, kPositionJitter),
                      rim.y + rng.uniform(-kPositionJitter, kPositionJitter)};
      if (clear_of(goal, ped.radius, placed)) return goal;
    }
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
      const Vec2 goal = circle_point(cfg.circle_radius, rng);
      if (clear_of(goal, ped.radius, placed)) return goal;
    }
  } else {
    const double half = cfg.square_side / 2.0;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
      const Vec2 goal{rng.uniform(-half, half), rng.uniform(-half, half)};
      if (clear_of(goal, ped.radius, placed)) return goal;
    }
  }
  throw SimError("goal regeneration failed for pedestrian " + std::to_string(ped_index));
}

}  // namespace cnav::sim
