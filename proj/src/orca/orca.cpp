#include "cnav/orca/orca.hpp"

#include <cmath>
#include <limits>

namespace cnav::orca {

namespace {

constexpr double kEpsilon = 1e-10;

// Finds the point on constraint `line_no` closest to v_opt that also
// satisfies constraints [0, line_no) and the speed disc. Returns false
// when that segment is empty.
bool linear_program1(const std::vector<HalfPlaneConstraint>& lines, size_t line_no,
                     double radius, const Vec2& v_opt, bool direction_opt, Vec2& result) {
  const double dot = lines[line_no].point.dot(lines[line_no].direction);
  const double discriminant = dot * dot + radius * radius - lines[line_no].point.norm_sq();
  if (discriminant < 0.0) return false;  // disc misses the line entirely

  const double sqrt_disc = std::sqrt(discriminant);
  double t_left = -dot - sqrt_disc;
  double t_right = -dot + sqrt_disc;

  for (size_t i = 0; i < line_no; ++i) {
    const double denominator = lines[line_no].direction.det(lines[i].direction);
    const double numerator =
        lines[i].direction.det(lines[line_no].point - lines[i].point);
    if (std::fabs(denominator) <= kEpsilon) {
      if (numerator < 0.0) return false;  // parallel and fully excluded
      continue;
    }
    const double t = numerator / denominator;
    if (denominator >= 0.0)
      t_right = std::min(t_right, t);
    else
      t_left = std::max(t_left, t);
    if (t_left > t_right) return false;
  }

  if (direction_opt) {
    if (v_opt.dot(lines[line_no].direction) > 0.0)
      result = lines[line_no].point + t_right * lines[line_no].direction;
    else
      result = lines[line_no].point + t_left * lines[line_no].direction;
  } else {
    const double t = lines[line_no].direction.dot(v_opt - lines[line_no].point);
    if (t < t_left)
      result = lines[line_no].point + t_left * lines[line_no].direction;
    else if (t > t_right)
      result = lines[line_no].point + t_right * lines[line_no].direction;
    else
      result = lines[line_no].point + t * lines[line_no].direction;
  }
  return true;
}

// Incremental 2D LP; returns lines.size() on success, otherwise the index
// of the first infeasible constraint (result holds the last feasible value).
size_t linear_program2(const std::vector<HalfPlaneConstraint>& lines, double radius,
                       const Vec2& v_opt, bool direction_opt, Vec2& result) {
  if (direction_opt) {
    result = v_opt * radius;  // v_opt is a unit direction here
  } else if (v_opt.norm_sq() > radius * radius) {
    result = v_opt.normalized() * radius;
  } else {
    result = v_opt;
  }

  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].direction.det(lines[i].point - result) > 0.0) {
      const Vec2 saved = result;
      if (!linear_program1(lines, i, radius, v_opt, direction_opt, result)) {
        result = saved;
        return i;
      }
    }
  }
  return lines.size();
}

// Distance-minimizing fallback when the half-planes have no common
// point: walks the violated constraints and relaxes each against the
// already-processed ones.
void linear_program3(const std::vector<HalfPlaneConstraint>& lines, size_t begin_line,
                     double radius, Vec2& result) {
  double distance = 0.0;
  for (size_t i = begin_line; i < lines.size(); ++i) {
    if (lines[i].direction.det(lines[i].point - result) > distance) {
      std::vector<HalfPlaneConstraint> proj_lines;
      proj_lines.reserve(i);
      for (size_t j = 0; j < i; ++j) {
        HalfPlaneConstraint line;
        const double determinant = lines[i].direction.det(lines[j].direction);
        if (std::fabs(determinant) <= kEpsilon) {
          if (lines[i].direction.dot(lines[j].direction) > 0.0) continue;
          line.point = 0.5 * (lines[i].point + lines[j].point);
        } else {
          line.point = lines[i].point +
                       (lines[j].direction.det(lines[i].point - lines[j].point) / determinant) *
                           lines[i].direction;
        }
        line.direction = (lines[j].direction - lines[i].direction).normalized();
        proj_lines.push_back(line);
      }

      const Vec2 saved = result;
      if (linear_program2(proj_lines, radius,
                          Vec2{-lines[i].direction.y, lines[i].direction.x}, true,
                          result) < proj_lines.size()) {
        // Only reachable through floating-point noise; keep the last
        // feasible iterate.
        result = saved;
      }
      distance = lines[i].direction.det(lines[i].point - result);
    }
  }
}

}  // namespace

OrcaParams robot_behavior_params(double safety_space) {
  OrcaParams params;
  params.safety_space = 2.0 * (safety_space + 0.01);
  return params;
}

OrcaParams pedestrian_params() {
  OrcaParams params;
  params.safety_space = 0.02;
  return params;
}

Vec2 preferred_velocity(const sim::AgentKinematics& agent, double dt) {
  const Vec2 to_goal = agent.goal - agent.position;
  const double dist = to_goal.norm();
  if (dist <= 0.0) return {0.0, 0.0};
  const double speed = std::min(agent.pref_speed, dist / dt);
  return to_goal * (speed / dist);
}

std::vector<HalfPlaneConstraint> build_orca_lines(const sim::AgentKinematics& self,
                                                  const std::vector<sim::AgentKinematics>& neighbors,
                                                  const OrcaParams& params,
                                                  double responsibility, double dt) {
  std::vector<HalfPlaneConstraint> lines;
  lines.reserve(neighbors.size());
  const double inv_horizon = 1.0 / params.time_horizon;

  for (const auto& other : neighbors) {
    const Vec2 relative_position = other.position - self.position;
    if (relative_position.norm_sq() > params.neighbor_dist * params.neighbor_dist) continue;

    const Vec2 relative_velocity = self.velocity - other.velocity;
    const double dist_sq = relative_position.norm_sq();
    const double combined_radius = self.radius + other.radius + params.safety_space;
    const double combined_radius_sq = combined_radius * combined_radius;

    HalfPlaneConstraint line;
    Vec2 u;

    if (dist_sq > combined_radius_sq) {
      // Not yet colliding: truncated velocity-obstacle cone at the
      // time_horizon cutoff.
      const Vec2 w = relative_velocity - inv_horizon * relative_position;
      const double w_len_sq = w.norm_sq();
      const double dot = w.dot(relative_position);

      if (dot < 0.0 && dot * dot > combined_radius_sq * w_len_sq) {
        // Closest to the cutoff circle.
        const double w_len = std::sqrt(w_len_sq);
        const Vec2 unit_w = w / w_len;
        line.direction = {unit_w.y, -unit_w.x};
        u = (combined_radius * inv_horizon - w_len) * unit_w;
      } else {
        // Closest to one of the cone legs.
        const double leg = std::sqrt(dist_sq - combined_radius_sq);
        if (relative_position.det(w) > 0.0) {
          line.direction = Vec2{relative_position.x * leg - relative_position.y * combined_radius,
                                relative_position.x * combined_radius + relative_position.y * leg} /
                           dist_sq;
        } else {
          line.direction = Vec2{relative_position.x * leg + relative_position.y * combined_radius,
                                -relative_position.x * combined_radius + relative_position.y * leg} /
                           (-dist_sq);
        }
        u = relative_velocity.dot(line.direction) * line.direction - relative_velocity;
      }
    } else {
      // Already overlapping: push apart over a single step.
      const double inv_step = 1.0 / dt;
      const Vec2 w = relative_velocity - inv_step * relative_position;
      const double w_len = w.norm();
      const Vec2 unit_w = w_len > 0.0 ? w / w_len : Vec2{0.0, -1.0};
      line.direction = {unit_w.y, -unit_w.x};
      u = (combined_radius * inv_step - w_len) * unit_w;
    }

    line.point = self.velocity + responsibility * u;
    lines.push_back(line);
  }
  return lines;
}

Vec2 solve_velocity(const std::vector<HalfPlaneConstraint>& lines, const Vec2& v_pref,
                    double max_speed, bool* feasible) {
  Vec2 result;
  const size_t fail = linear_program2(lines, max_speed, v_pref, false, result);
  if (feasible != nullptr) *feasible = fail == lines.size();
  if (fail < lines.size()) linear_program3(lines, fail, max_speed, result);
  return result;
}

Vec2 orca_policy(const sim::AgentKinematics& self,
                 const std::vector<sim::AgentKinematics>& neighbors, const OrcaParams& params,
                 double responsibility, double dt) {
  const Vec2 v_pref = preferred_velocity(self, dt);
  const auto lines = build_orca_lines(self, neighbors, params, responsibility, dt);
  return solve_velocity(lines, v_pref, params.max_speed);
}

}  // namespace cnav::orca
