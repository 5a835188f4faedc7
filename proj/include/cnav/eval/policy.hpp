#pragma once

#include <deque>
#include <memory>
#include <string>

#include "cnav/net/st2.hpp"
#include "cnav/orca/orca.hpp"
#include "cnav/sim/types.hpp"

namespace cnav::eval {

// Episode-scoped controller. Learned policies work from the observation
// stream alone; the reciprocal-avoidance baseline is the same privileged
// controller that produced the datasets and reads the world directly.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void reset() {}
  virtual Vec2 act(const sim::Observation& obs, const sim::WorldState& world) = 0;
  virtual std::string name() const = 0;
  // Fresh instance for a parallel evaluation worker.
  virtual std::unique_ptr<Policy> clone() const = 0;
};

class OrcaPolicy : public Policy {
 public:
  explicit OrcaPolicy(double safety_space = 0.2)
      : params_(orca::robot_behavior_params(safety_space)) {}

  Vec2 act(const sim::Observation&, const sim::WorldState& world) override {
    orca::OrcaParams params = params_;
    params.max_speed = world.robot.kin.pref_speed;
    return orca::orca_policy(world.robot.kin, world.pedestrians, params);
  }
  std::string name() const override { return "orca"; }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<OrcaPolicy>(*this); }

 private:
  orca::OrcaParams params_;
};

// Deterministic evaluation of a trained policy network: keeps the 3-step
// observation history itself and acts with the distribution mean.
// Observations pass through 32-bit floats to match the training data path.
class LearnedPolicy : public Policy {
 public:
  LearnedPolicy(std::shared_ptr<net::PolicyNetwork> network, std::string label)
      : owned_(std::move(network)), network_(owned_.get()), label_(std::move(label)) {}
  // Non-owning view, for evaluating a network that lives elsewhere.
  LearnedPolicy(const net::PolicyNetwork& network, std::string label)
      : network_(&network), label_(std::move(label)) {}

  void reset() override { history_.clear(); }
  Vec2 act(const sim::Observation& obs, const sim::WorldState& world) override;
  std::string name() const override { return label_; }
  std::unique_ptr<Policy> clone() const override {
    // Workers share the immutable network and keep their own history.
    auto copy = std::make_unique<LearnedPolicy>(*this);
    copy->history_.clear();
    return copy;
  }

 private:
  std::shared_ptr<net::PolicyNetwork> owned_;
  const net::PolicyNetwork* network_ = nullptr;
  std::string label_;
  std::deque<sim::Observation> history_;
};

// Reads a training checkpoint (with its meta.* blocks) and rebuilds the
// policy network for evaluation.
struct LoadedPolicy {
  std::shared_ptr<net::PolicyNetwork> network;
  net::NetConfig net_config;
  int human_count = 0;
  std::string mode;
};

LoadedPolicy load_policy_checkpoint(const std::string& path);

}  // namespace cnav::eval
