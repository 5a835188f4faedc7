#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "cnav/ad/adam.hpp"
#include "cnav/data/dataset.hpp"
#include "cnav/net/st2.hpp"
#include "cnav/rng.hpp"

namespace cnav::train {

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Mode { St2Orl, IqlFlat, Bc };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& name);

struct TrainConfig {
  double gamma = 0.9;
  double expectile = 0.8;      // tau
  double beta = 100.0;         // inverse temperature
  double learning_rate = 0.0005;
  int batch_size = 128;
  int64_t iterations = 200000;
  double polyak = 0.005;       // alpha, target-network tracking rate
  double delta_t = 0.25;       // s
  double awr_weight_cap = 100.0;
  Mode mode = Mode::St2Orl;
  // gamma^(delta_t * v_pre) per-step discount; false uses plain gamma.
  bool velocity_scaled_discount = true;
  int64_t checkpoint_every = 10000;
  uint64_t seed = 1;
};

struct LossReport {
  int64_t iteration = 0;
  double q_loss = 0.0;
  double v_loss = 0.0;
  double policy_loss = 0.0;
  double adv_mean = 0.0;
  double awr_weight_mean = 0.0;
  double awr_clip_fraction = 0.0;  // share of weights that hit the cap
};

// Asymmetric squared penalty |tau - 1(u<0)| u^2.
double expectile_penalty(double u, double tau);

// Bootstrapped target r + (1-d) gamma^(dt v_pre) V(s'); goal and collision
// are environment terminals, timeout truncates and still bootstraps.
double q_target(double r, sim::Termination term, double v_next, double v_pre,
                const TrainConfig& cfg);

// target <- (1-alpha) target + alpha online, elementwise.
void polyak_update(net::ParamList& target, const net::ParamList& online, double alpha);

// Counts action-conditioned network evaluations during training and how
// many used the sampled batch's actions verbatim.
struct TrainAudit {
  int64_t action_queries = 0;
  int64_t dataset_action_queries = 0;
};

// Per-iteration internals, filled when a sink is attached; lets tests
// replay each batched loss with a scalar loop.
struct StepDebug {
  std::vector<double> y;        // bootstrapped Q targets
  std::vector<double> q_pred;
  std::vector<double> q_hat;    // target-network values
  std::vector<double> v_pred;
  std::vector<double> adv;
  std::vector<double> awr_weights;
  std::vector<double> log_probs;
};

class Trainer {
 public:
  Trainer(const data::Dataset& dataset, const TrainConfig& cfg, const net::NetConfig& net_cfg);
  ~Trainer();

  LossReport step_once();

  using ReportFn = std::function<void(const LossReport&)>;
  using CheckpointFn = std::function<void(int64_t iteration)>;
  void run(const ReportFn& on_report, const CheckpointFn& on_checkpoint,
           int64_t report_every = 100);

  int64_t iteration() const { return iteration_; }
  const TrainAudit& audit() const { return audit_; }
  const TrainConfig& config() const { return cfg_; }

  void set_debug_sink(StepDebug* sink) { debug_ = sink; }
  // Called after each optimizer sub-step ("q", "v", "pi").
  void set_substep_hook(std::function<void(const std::string&)> hook) {
    substep_hook_ = std::move(hook);
  }

  // Every parameter of every live network, prefixed q. / q_target. / v. / pi.
  net::ParamList checkpoint_params() const;
  void restore(const std::string& checkpoint_path);

  // Mean log pi(a|s) over the full dataset (no gradients).
  double dataset_log_likelihood();

  const net::PolicyNetwork& policy() const { return *pi_; }
  const net::QNetwork& q_network() const { return *q_; }
  const net::VNetwork& v_network() const { return *v_; }

 private:
  struct Batch;
  Batch sample_batch();
  ad::Tensor audited_actions(const Batch& batch);

  const data::Dataset& dataset_;
  TrainConfig cfg_;
  net::NetConfig net_cfg_;
  Rng rng_;
  int64_t iteration_ = 0;
  TrainAudit audit_;
  StepDebug* debug_ = nullptr;
  std::function<void(const std::string&)> substep_hook_;

  std::unique_ptr<net::QNetwork> q_;
  std::unique_ptr<net::QNetwork> q_target_;
  std::unique_ptr<net::VNetwork> v_;
  std::unique_ptr<net::PolicyNetwork> pi_;
  std::unique_ptr<ad::Adam> q_adam_;
  std::unique_ptr<ad::Adam> v_adam_;
  std::unique_ptr<ad::Adam> pi_adam_;
  net::ParamList q_params_;
  net::ParamList q_target_params_;
};

}  // namespace cnav::train
