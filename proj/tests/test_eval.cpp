#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cnav/eval/eval.hpp"
#include "cnav/eval/render.hpp"
#include "cnav/sim/trajectory.hpp"

using namespace cnav;
namespace fs = std::filesystem;

namespace {

class ZeroPolicy : public eval::Policy {
 public:
  Vec2 act(const sim::Observation&, const sim::WorldState&) override { return {0.0, 0.0}; }
  std::string name() const override { return "zero"; }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<ZeroPolicy>(); }
};

std::string temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

sim::Trajectory fixture_trajectory(int steps) {
  sim::Trajectory traj;
  traj.start = {0.0, -4.0};
  traj.goal = {0.0, 4.0};
  traj.ped_starts = {{2.0, 0.0}, {-2.0, 1.0}};
  for (int k = 1; k <= steps; ++k) {
    sim::TrajectoryStep s;
    s.step_index = k;
    s.robot = {0.0, -4.0 + 0.25 * k};
    s.pedestrians = {{2.0 - 0.2 * k, 0.0}, {-2.0 + 0.1 * k, 1.0}};
    s.reward = 0.25;
    s.termination = k == steps ? sim::Termination::ReachGoal : sim::Termination::Running;
    traj.steps.push_back(s);
  }
  return traj;
}

}  // namespace

TEST_CASE("efficiency reproduces the published numbers exactly to 3 decimals") {
  CHECK(std::fabs(eval::efficiency(0.960, 500000) - 0.192) < 5e-4);
  CHECK(std::fabs(eval::efficiency(0.786, 500000) - 0.157) < 5e-4);
  CHECK(eval::efficiency(0.0, 123456) == 0.0);
}

TEST_CASE("efficiency is linear in reward and inverse in transitions") {
  const double base = eval::efficiency(0.5, 200000);
  CHECK(eval::efficiency(1.0, 200000) == doctest::Approx(2.0 * base));
  CHECK(eval::efficiency(0.5, 400000) == doctest::Approx(0.5 * base));
}

TEST_CASE("efficiency without training transitions is an error") {
  CHECK_THROWS_AS(eval::efficiency(0.5, 0), eval::EvalError);
}

TEST_CASE("a motionless policy times out, never succeeding") {
  ZeroPolicy policy;
  eval::SuiteOptions opts;
  opts.scenario = sim::ScenarioConfig::simple();
  opts.episodes = 10;
  opts.base_seed = 900;
  const auto report = eval::run_suite(policy, opts);
  CHECK(report.success_rate == 0.0);
  CHECK(report.avg_success_time == 0.0);
  // Pedestrians cannot see the robot, so a parked robot is occasionally
  // run into; timeouts still dominate by far.
  CHECK(report.timeout_rate >= 0.8);
  CHECK(report.timeout_rate + report.collision_rate == 1.0);
}

TEST_CASE("identical seeds give identical reports, different seeds differ") {
  eval::OrcaPolicy policy(0.2);
  eval::SuiteOptions opts;
  opts.scenario = sim::ScenarioConfig::simple();
  opts.episodes = 6;
  opts.base_seed = 901;
  const auto a = eval::run_suite(policy, opts);
  const auto b = eval::run_suite(policy, opts);
  CHECK(eval::format_eval_report(a, "orca") == eval::format_eval_report(b, "orca"));
  opts.base_seed = 902;
  // Not a guarantee in general, but these seeds do produce different rewards.
  CHECK(eval::run_suite(policy, opts).avg_reward != a.avg_reward);
}

TEST_CASE("episode outcomes are independent of suite composition") {
  eval::OrcaPolicy policy(0.2);
  const std::string dir_all = temp_dir("cnav_eval_all");
  eval::SuiteOptions opts;
  opts.scenario = sim::ScenarioConfig::simple();
  opts.episodes = 3;
  opts.base_seed = 910;
  opts.dump_dir = dir_all;
  eval::run_suite(policy, opts);

  for (int i = 0; i < 3; ++i) {
    const std::string dir_one = temp_dir("cnav_eval_one");
    eval::SuiteOptions single = opts;
    single.episodes = 1;
    single.base_seed = 910 + i;
    single.dump_dir = dir_one;
    eval::run_suite(policy, single);
    char name[64];
    std::snprintf(name, sizeof(name), "/episode_%04d.cnavtraj", i);
    CHECK(read_file(dir_all + name) == read_file(dir_one + "/episode_0000.cnavtraj"));
  }
}

TEST_CASE("worker pools reproduce the single-threaded report exactly") {
  eval::OrcaPolicy policy(0.2);
  eval::SuiteOptions opts;
  opts.scenario = sim::ScenarioConfig::simple();
  opts.episodes = 9;
  opts.base_seed = 915;
  const auto serial = eval::run_suite(policy, opts);
  opts.jobs = 3;
  const auto parallel = eval::run_suite(policy, opts);
  CHECK(eval::format_eval_report(serial, "orca") == eval::format_eval_report(parallel, "orca"));
}

TEST_CASE("report metrics equal a recomputation from the trajectory dumps") {
  eval::OrcaPolicy policy(0.2);
  const std::string dir = temp_dir("cnav_eval_oracle");
  eval::SuiteOptions opts;
  opts.scenario = sim::ScenarioConfig::simple();
  opts.episodes = 10;
  opts.base_seed = 920;
  opts.dump_dir = dir;
  const auto report = eval::run_suite(policy, opts);

  int successes = 0, collisions = 0, timeouts = 0;
  int64_t success_steps = 0;
  double reward_sum = 0.0;
  for (int i = 0; i < opts.episodes; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "/episode_%04d.cnavtraj", i);
    const auto traj = sim::load_trajectory(dir + name);
    double episode_reward = 0.0;
    for (const auto& s : traj.steps) episode_reward += s.reward;
    reward_sum += episode_reward;
    switch (traj.outcome()) {
      case sim::Termination::ReachGoal:
        ++successes;
        success_steps += traj.steps.back().step_index;
        break;
      case sim::Termination::Collision: ++collisions; break;
      case sim::Termination::Timeout: ++timeouts; break;
      case sim::Termination::Running: FAIL("dangling episode in dump");
    }
  }
  CHECK(report.success_rate == successes / 10.0);
  CHECK(report.collision_rate == collisions / 10.0);
  CHECK(report.timeout_rate == timeouts / 10.0);
  if (successes > 0)
    CHECK(report.avg_success_time == success_steps * sim::kTimeStep / successes);
  CHECK(report.avg_reward == reward_sum / 10.0);
}

TEST_CASE("the reciprocal-avoidance baseline clears most simple episodes") {
  eval::OrcaPolicy policy(0.2);
  eval::SuiteOptions opts;
  opts.scenario = sim::ScenarioConfig::simple();
  opts.episodes = 50;
  opts.base_seed = 930;
  const auto report = eval::run_suite(policy, opts);
  CHECK(report.success_rate >= 0.8);
  CHECK(report.avg_success_time > 8.0);
  CHECK(report.avg_success_time < 18.0);
}

TEST_CASE("trajectory text round-trips exactly") {
  const auto traj = fixture_trajectory(9);
  const std::string text = sim::serialize_trajectory(traj);
  const auto back = sim::parse_trajectory(text);
  CHECK(sim::serialize_trajectory(back) == text);
  CHECK(back.steps.size() == traj.steps.size());
  CHECK(back.cumulative_reward() == traj.cumulative_reward());
}

TEST_CASE("malformed trajectory dumps are rejected") {
  CHECK_THROWS_AS(sim::parse_trajectory("not a header\n"), sim::TrajectoryError);
  const std::string missing_fields = "CNAVTRAJ 1\nhumans 2\nstep 1 0.0\n";
  CHECK_THROWS_AS(sim::parse_trajectory(missing_fields), sim::TrajectoryError);
}

TEST_CASE("an empty trajectory renders start and goal markers only") {
  sim::Trajectory traj;
  traj.start = {0.0, -4.0};
  traj.goal = {0.0, 4.0};
  const std::string svg = eval::render_trajectory_svg(traj);
  CHECK(svg.find("goal") != std::string::npos);
  CHECK(svg.find("<circle") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("a one-step trajectory connects two robot waypoints") {
  const auto traj = fixture_trajectory(1);
  const std::string svg = eval::render_trajectory_svg(traj);
  // Robot polyline holds exactly the start and one step.
  const auto at = svg.find("stroke=\"black\"");
  REQUIRE(at != std::string::npos);
  const auto points_at = svg.find("points=\"", at);
  const auto points_end = svg.find('"', points_at + 8);
  const std::string points = svg.substr(points_at + 8, points_end - points_at - 8);
  CHECK(std::count(points.begin(), points.end(), ',') == 2);
  CHECK(std::count(points.begin(), points.end(), ' ') == 1);
}

TEST_CASE("rendering is deterministic and matches the golden file") {
  const auto traj = fixture_trajectory(12);
  const std::string svg = eval::render_trajectory_svg(traj);
  CHECK(svg == eval::render_trajectory_svg(traj));
  const std::string golden_path = std::string(CNAV_TEST_DATA_DIR) + "/golden_traj.svg";
  CHECK(svg == read_file(golden_path));
}
