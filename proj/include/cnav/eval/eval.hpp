#pragma once

#include <optional>
#include <string>

#include "cnav/eval/policy.hpp"
#include "cnav/sim/trajectory.hpp"
#include "cnav/sim/types.hpp"

namespace cnav::eval {

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvalReport {
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double timeout_rate = 0.0;
  double avg_success_time = 0.0;  // s, goal-reaching episodes only
  double avg_reward = 0.0;        // cumulative, all episodes
  std::optional<double> efficiency;
  int episode_count = 0;
};

struct SuiteOptions {
  sim::ScenarioConfig scenario;
  int episodes = 500;
  uint64_t base_seed = 0;
  // Directory for per-episode trajectory dumps (episode_NNNN.cnavtraj).
  std::optional<std::string> dump_dir;
  // Training-set size behind the policy; sets the efficiency column.
  std::optional<int64_t> training_transitions;
  // Worker count; every worker runs its own policy clone, and the report
  // reduction keeps episode-index order, so results match jobs = 1 exactly.
  int jobs = 1;
};

// Seeds episode i with base_seed + i so every policy faces the same
// pedestrian streams; outcomes are independent of evaluation order.
EvalReport run_suite(Policy& policy, const SuiteOptions& opts);

// Sampling efficiency: average cumulative reward per training
// transition, scaled by 1e5.
double efficiency(double avg_reward, int64_t total_training_transitions);

std::string format_eval_report(const EvalReport& report, const std::string& label);

}  // namespace cnav::eval
