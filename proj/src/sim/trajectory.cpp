#include "cnav/sim/trajectory.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace cnav::sim {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(std::istringstream& iss, int line_no, const char* what) {
  double v;
  if (!(iss >> v))
    throw TrajectoryError("trajectory line " + std::to_string(line_no) + ": missing " + what);
  return v;
}

}  // namespace

Trajectory trajectory_begin(const WorldState& world) {
  Trajectory traj;
  traj.robot_radius = world.robot.kin.radius;
  traj.ped_radius = world.pedestrians.empty() ? 0.3 : world.pedestrians[0].radius;
  traj.start = world.robot.kin.position;
  traj.goal = world.robot.kin.goal;
  for (const auto& ped : world.pedestrians) traj.ped_starts.push_back(ped.position);
  return traj;
}

void trajectory_append(Trajectory& traj, const WorldState& world, double reward,
                       Termination termination) {
  TrajectoryStep step;
  step.step_index = world.step_index;
  step.robot = world.robot.kin.position;
  for (const auto& ped : world.pedestrians) step.pedestrians.push_back(ped.position);
  step.reward = reward;
  step.termination = termination;
  traj.steps.push_back(std::move(step));
}

std::string serialize_trajectory(const Trajectory& traj) {
  std::string out = "CNAVTRAJ 1\n";
  out += "humans " + std::to_string(traj.human_count()) + "\n";
  out += "robot_radius " + fmt(traj.robot_radius) + "\n";
  out += "ped_radius " + fmt(traj.ped_radius) + "\n";
  out += "start " + fmt(traj.start.x) + " " + fmt(traj.start.y) + "\n";
  out += "goal " + fmt(traj.goal.x) + " " + fmt(traj.goal.y) + "\n";
  for (const auto& p : traj.ped_starts)
    out += "ped_start " + fmt(p.x) + " " + fmt(p.y) + "\n";
  for (const auto& s : traj.steps) {
    out += "step " + std::to_string(s.step_index) + " " + fmt(s.robot.x) + " " + fmt(s.robot.y);
    for (const auto& p : s.pedestrians) out += " " + fmt(p.x) + " " + fmt(p.y);
    out += " " + fmt(s.reward) + " ";
    out += termination_name(s.termination);
    out += "\n";
  }
  return out;
}

Trajectory parse_trajectory(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  Trajectory traj;
  int humans = -1;

  if (!std::getline(in, line) || line != "CNAVTRAJ 1")
    throw TrajectoryError("trajectory line 1: bad header, expected 'CNAVTRAJ 1'");
  line_no = 1;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream iss(line);
    std::string tag;
    iss >> tag;
    if (tag == "humans") {
      if (!(iss >> humans))
        throw TrajectoryError("trajectory line " + std::to_string(line_no) + ": bad humans");
    } else if (tag == "robot_radius") {
      traj.robot_radius = parse_double(iss, line_no, "robot_radius");
    } else if (tag == "ped_radius") {
      traj.ped_radius = parse_double(iss, line_no, "ped_radius");
    } else if (tag == "start") {
      traj.start.x = parse_double(iss, line_no, "start x");
      traj.start.y = parse_double(iss, line_no, "start y");
    } else if (tag == "goal") {
      traj.goal.x = parse_double(iss, line_no, "goal x");
      traj.goal.y = parse_double(iss, line_no, "goal y");
    } else if (tag == "ped_start") {
      Vec2 p;
      p.x = parse_double(iss, line_no, "ped_start x");
      p.y = parse_double(iss, line_no, "ped_start y");
      traj.ped_starts.push_back(p);
    } else if (tag == "step") {
      if (humans < 0)
        throw TrajectoryError("trajectory line " + std::to_string(line_no) +
                              ": step before humans header");
      TrajectoryStep s;
      double idx = parse_double(iss, line_no, "step index");
      s.step_index = static_cast<int>(idx);
      s.robot.x = parse_double(iss, line_no, "robot x");
      s.robot.y = parse_double(iss, line_no, "robot y");
      for (int h = 0; h < humans; ++h) {
        Vec2 p;
        p.x = parse_double(iss, line_no, "ped x");
        p.y = parse_double(iss, line_no, "ped y");
        s.pedestrians.push_back(p);
      }
      s.reward = parse_double(iss, line_no, "reward");
      std::string term;
      if (!(iss >> term))
        throw TrajectoryError("trajectory line " + std::to_string(line_no) + ": missing termination");
      s.termination = termination_from_name(term);
      traj.steps.push_back(std::move(s));
    } else {
      throw TrajectoryError("trajectory line " + std::to_string(line_no) + ": unknown tag '" +
                            tag + "'");
    }
  }
  if (humans >= 0 && humans != traj.human_count())
    throw TrajectoryError("trajectory header declares " + std::to_string(humans) +
                          " pedestrians, found " + std::to_string(traj.human_count()));
  return traj;
}

void save_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw TrajectoryError("cannot open " + path + " for writing");
  os << serialize_trajectory(traj);
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw TrajectoryError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_trajectory(ss.str());
}

}  // namespace cnav::sim
