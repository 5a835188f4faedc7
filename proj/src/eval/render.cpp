#include "cnav/eval/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace cnav::eval {

namespace {

constexpr int kCanvas = 640;
constexpr int kStampEvery = 4;  // steps between waypoint stamps (1 s)

const char* kPedColors[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
                            "#0b8a8f", "#f032e6", "#9a6324", "#808000"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Mapper {
  double scale, cx, cy;
  double x(double wx) const { return cx + wx * scale; }
  double y(double wy) const { return cy - wy * scale; }
};

std::string polyline(const std::vector<Vec2>& pts, const Mapper& m, const std::string& color,
                     double width) {
  std::string out = "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" +
                    fmt(width) + "\" points=\"";
  for (size_t i = 0; i < pts.size(); ++i) {
    out += fmt(m.x(pts[i].x)) + "," + fmt(m.y(pts[i].y));
    if (i + 1 < pts.size()) out += " ";
  }
  return out + "\"/>\n";
}

std::string circle(const Vec2& p, double r, const Mapper& m, const std::string& fill,
                   const std::string& stroke) {
  return "<circle cx=\"" + fmt(m.x(p.x)) + "\" cy=\"" + fmt(m.y(p.y)) + "\" r=\"" + fmt(r) +
         "\" fill=\"" + fill + "\" stroke=\"" + stroke + "\"/>\n";
}

std::string stamp(const Vec2& p, double seconds, const Mapper& m, const std::string& color) {
  char label[32];
  if (seconds == std::floor(seconds))
    std::snprintf(label, sizeof(label), "%.0f", seconds);
  else
    std::snprintf(label, sizeof(label), "%.2f", seconds);
  return "<text x=\"" + fmt(m.x(p.x) + 4.0) + "\" y=\"" + fmt(m.y(p.y) - 4.0) +
         "\" font-size=\"9\" fill=\"" + color + "\">" + label + "</text>\n";
}

}  // namespace

std::string render_trajectory_svg(const sim::Trajectory& traj) {
  // World extent from everything drawn, with head room for markers.
  double extent = 5.0;
  auto widen = [&extent](const Vec2& p) {
    extent = std::max({extent, std::fabs(p.x), std::fabs(p.y)});
  };
  widen(traj.start);
  widen(traj.goal);
  for (const auto& p : traj.ped_starts) widen(p);
  for (const auto& s : traj.steps) {
    widen(s.robot);
    for (const auto& p : s.pedestrians) widen(p);
  }
  const Mapper m{kCanvas / (2.0 * (extent + 1.0)), kCanvas / 2.0, kCanvas / 2.0};

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kCanvas) +
         "\" height=\"" + std::to_string(kCanvas) + "\" viewBox=\"0 0 " +
         std::to_string(kCanvas) + " " + std::to_string(kCanvas) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // Goal marker: cross plus label.
  const double gx = m.x(traj.goal.x), gy = m.y(traj.goal.y);
  svg += "<path d=\"M" + fmt(gx - 6) + " " + fmt(gy - 6) + " L" + fmt(gx + 6) + " " +
         fmt(gy + 6) + " M" + fmt(gx - 6) + " " + fmt(gy + 6) + " L" + fmt(gx + 6) + " " +
         fmt(gy - 6) + "\" stroke=\"red\" stroke-width=\"2\"/>\n";
  svg += "<text x=\"" + fmt(gx + 8) + "\" y=\"" + fmt(gy) +
         "\" font-size=\"11\" fill=\"red\">goal</text>\n";

  // Paths: start point plus every recorded step.
  std::vector<Vec2> robot_path{traj.start};
  for (const auto& s : traj.steps) robot_path.push_back(s.robot);
  for (int h = 0; h < traj.human_count(); ++h) {
    const std::string color = kPedColors[h % (sizeof(kPedColors) / sizeof(kPedColors[0]))];
    std::vector<Vec2> path{traj.ped_starts[h]};
    for (const auto& s : traj.steps) path.push_back(s.pedestrians[h]);
    svg += polyline(path, m, color, 1.2);
    svg += circle(traj.ped_starts[h], traj.ped_radius * m.scale, m, "none", color);
    for (size_t k = 0; k < path.size(); k += kStampEvery) {
      svg += circle(path[k], 2.0, m, color, "none");
      svg += stamp(path[k], k * sim::kTimeStep, m, color);
    }
  }
  svg += polyline(robot_path, m, "black", 1.8);
  svg += circle(traj.start, traj.robot_radius * m.scale, m, "none", "black");
  for (size_t k = 0; k < robot_path.size(); k += kStampEvery) {
    svg += circle(robot_path[k], 2.4, m, "black", "none");
    svg += stamp(robot_path[k], k * sim::kTimeStep, m, "black");
  }

  svg += "</svg>\n";
  return svg;
}

void render_trajectory_file(const sim::Trajectory& traj, const std::string& out_path) {
  std::ofstream os(out_path, std::ios::binary | std::ios::trunc);
  if (!os) throw sim::TrajectoryError("cannot open " + out_path + " for writing");
  os << render_trajectory_svg(traj);
}

}  // namespace cnav::eval
