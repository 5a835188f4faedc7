#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cnav/sim/types.hpp"

namespace cnav::data {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StatsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One record of Algorithm 1. Payloads are 32-bit floats: values are
// quantized once at collection time, so file round-trips are the identity.
struct Transition {
  std::vector<float> obs;       // robot(6) + H*7
  std::array<float, 2> action{};
  float reward = 0.0f;
  std::vector<float> next_obs;
  sim::Termination termination = sim::Termination::Running;

  bool operator==(const Transition&) const = default;
};

struct CollectConfig {
  uint64_t capacity = 500000;
  double noise_std = 0.1;             // m/s per action component
  sim::ScenarioConfig scenario;
  double behavior_safety_space = 0.2;  // m
  uint64_t rng_seed = 0;
};

struct DatasetStats {
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double timeout_rate = 0.0;
  double avg_success_time = 0.0;      // s, over goal-reaching episodes
  double avg_cumulative_reward = 0.0; // over complete episodes
  int64_t episode_count = 0;
  int64_t transition_count = 0;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(int human_count, std::vector<Transition> transitions);

  int human_count() const { return human_count_; }
  int obs_dim() const { return sim::Observation::kRobotDim + human_count_ * sim::Observation::kPedDim; }
  int64_t size() const { return static_cast<int64_t>(transitions_.size()); }
  const Transition& operator[](int64_t i) const { return transitions_[i]; }
  const std::vector<Transition>& transitions() const { return transitions_; }

  // In-episode step index of transition i (0 for episode starts),
  // derived from the termination column.
  int step_in_episode(int64_t i) const { return step_in_episode_[i]; }

  bool operator==(const Dataset& o) const {
    return human_count_ == o.human_count_ && transitions_ == o.transitions_;
  }

 private:
  void index_episodes();

  int human_count_ = 0;
  std::vector<Transition> transitions_;
  std::vector<int> step_in_episode_;
};

// Runs scenario episodes under the reciprocal-avoidance behavior policy
// with Gaussian exploration noise until exactly `capacity` transitions
// exist; collection stops mid-episode when full.
Dataset collect(const CollectConfig& config);

// Little-endian binary, magic "CNAVDS01", columnar 32-bit-float blocks.
void save(const Dataset& dataset, const std::string& path);
Dataset load(const std::string& path);

// Episode metrics over complete episodes only; throws StatsError when
// the dataset holds no complete episode.
DatasetStats stats(const Dataset& dataset);

std::string format_stats(const DatasetStats& s, const std::string& label);

}  // namespace cnav::data
