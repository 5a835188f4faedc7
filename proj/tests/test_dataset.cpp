#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cnav/data/dataset.hpp"

using namespace cnav;
using data::CollectConfig;
using data::Dataset;
using data::Transition;
using sim::Termination;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Synthetic episodes: `lengths[i]` transitions ending in `ends[i]`.
Dataset synthetic(const std::vector<int>& lengths, const std::vector<Termination>& ends,
                  float reward_per_step = 0.1f) {
  std::vector<Transition> ts;
  for (size_t e = 0; e < lengths.size(); ++e) {
    for (int k = 0; k < lengths[e]; ++k) {
      Transition t;
      t.obs.assign(6 + 7, 0.0f);
      t.next_obs.assign(6 + 7, 0.0f);
      t.reward = reward_per_step;
      t.termination = k + 1 == lengths[e] ? ends[e] : Termination::Running;
      ts.push_back(std::move(t));
    }
  }
  return Dataset(1, std::move(ts));
}

CollectConfig small_config(uint64_t capacity, uint64_t seed) {
  CollectConfig cc;
  cc.capacity = capacity;
  cc.rng_seed = seed;
  cc.scenario = sim::ScenarioConfig::simple();
  return cc;
}

}  // namespace

TEST_CASE("capacity one stops after the first transition of the first episode") {
  const Dataset d = data::collect(small_config(1, 7));
  REQUIRE(d.size() == 1);
  CHECK(d.step_in_episode(0) == 0);
  CHECK(d.human_count() == 6);
  CHECK(d[0].obs.size() == 6 + 6 * 7);
}

TEST_CASE("collection is deterministic under a fixed seed") {
  const Dataset a = data::collect(small_config(400, 11));
  const Dataset b = data::collect(small_config(400, 11));
  CHECK(a == b);
}

TEST_CASE("different seeds give different data") {
  const Dataset a = data::collect(small_config(50, 1));
  const Dataset b = data::collect(small_config(50, 2));
  CHECK_FALSE(a == b);
}

TEST_CASE("noisy actions stay within the speed limit") {
  const Dataset d = data::collect(small_config(500, 13));
  for (const auto& t : d.transitions()) {
    const double speed = std::sqrt(double(t.action[0]) * t.action[0] +
                                   double(t.action[1]) * t.action[1]);
    CHECK(speed <= 1.0 + 1e-6);
  }
}

TEST_CASE("within an episode next_obs chains into the following obs exactly") {
  const Dataset d = data::collect(small_config(600, 17));
  int checked = 0;
  for (int64_t i = 0; i + 1 < d.size(); ++i) {
    if (d[i].termination != Termination::Running) continue;
    CHECK(d[i].next_obs == d[i + 1].obs);
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("every complete episode ends with exactly one terminal transition") {
  const Dataset d = data::collect(small_config(600, 19));
  int64_t episodes = 0;
  for (int64_t i = 0; i < d.size(); ++i) {
    if (d[i].termination != Termination::Running) {
      ++episodes;
      if (i + 1 < d.size()) CHECK(d.step_in_episode(i + 1) == 0);
    } else if (i + 1 < d.size()) {
      CHECK(d.step_in_episode(i + 1) == d.step_in_episode(i) + 1);
    }
  }
  CHECK(episodes >= 1);
}

TEST_CASE("save and load round-trip bit-exactly") {
  const Dataset d = data::collect(small_config(120, 23));
  const std::string path = temp_path("cnav_roundtrip.cnav");
  data::save(d, path);
  CHECK(data::load(path) == d);
  std::filesystem::remove(path);
}

TEST_CASE("an empty dataset round-trips through a header-only file") {
  const Dataset empty(6, {});
  const std::string path = temp_path("cnav_empty.cnav");
  data::save(empty, path);
  const Dataset back = data::load(path);
  CHECK(back.size() == 0);
  CHECK(back.human_count() == 6);
  std::filesystem::remove(path);
}

TEST_CASE("a truncated file fails loudly with no partial dataset") {
  const Dataset d = data::collect(small_config(40, 29));
  const std::string path = temp_path("cnav_trunc.cnav");
  data::save(d, path);
  const auto full_size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full_size - 8);
  CHECK_THROWS_AS(data::load(path), data::FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("a bad magic header is rejected with a byte offset") {
  const std::string path = temp_path("cnav_magic.cnav");
  std::ofstream(path, std::ios::binary) << "NOTADATA garbage";
  try {
    data::load(path);
    FAIL("expected FormatError");
  } catch (const data::FormatError& e) {
    CHECK(std::string(e.what()).find("byte 0") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("stats on one success and one collision") {
  const Dataset d = synthetic({40, 10}, {Termination::ReachGoal, Termination::Collision});
  const auto s = data::stats(d);
  CHECK(s.success_rate == 0.5);
  CHECK(s.collision_rate == 0.5);
  CHECK(s.timeout_rate == 0.0);
  CHECK(s.avg_success_time == doctest::Approx(10.0));  // 40 steps * 0.25 s
  CHECK(s.episode_count == 2);
}

TEST_CASE("an all-success dataset has zero collision rate") {
  const Dataset d = synthetic({5, 8, 13}, {Termination::ReachGoal, Termination::ReachGoal,
                                           Termination::ReachGoal});
  const auto s = data::stats(d);
  CHECK(s.success_rate == 1.0);
  CHECK(s.collision_rate == 0.0);
}

TEST_CASE("cumulative reward averages the hand-computed episode sums") {
  // Episodes of 3, 4 and 5 steps at 0.1 per step: sums 0.3, 0.4, 0.5.
  const Dataset d = synthetic({3, 4, 5}, {Termination::ReachGoal, Termination::Collision,
                                          Termination::Timeout});
  const auto s = data::stats(d);
  const double hand = ((3 + 4 + 5) * 0.1f) / 3.0;
  CHECK(s.avg_cumulative_reward == doctest::Approx(hand).epsilon(1e-6));
  CHECK(s.timeout_rate == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("a trailing incomplete episode is excluded from episode metrics") {
  std::vector<Transition> ts = synthetic({4}, {Termination::ReachGoal}).transitions();
  Transition dangling;
  dangling.obs.assign(13, 0.0f);
  dangling.next_obs.assign(13, 0.0f);
  dangling.reward = 99.0f;
  dangling.termination = Termination::Running;
  ts.push_back(dangling);
  const auto s = data::stats(Dataset(1, std::move(ts)));
  CHECK(s.episode_count == 1);
  CHECK(s.avg_cumulative_reward == doctest::Approx(0.4).epsilon(1e-6));
}

TEST_CASE("stats require at least one complete episode") {
  std::vector<Transition> ts;
  Transition t;
  t.obs.assign(13, 0.0f);
  t.next_obs.assign(13, 0.0f);
  t.termination = Termination::Running;
  ts.push_back(t);
  CHECK_THROWS_AS(data::stats(Dataset(1, std::move(ts))), data::StatsError);
}
