#include "cnav/train/trainer.hpp"

#include <cmath>
#include <cstring>

#include "cnav/ad/adam.hpp"
#include "cnav/ad/checkpoint.hpp"
#include "cnav/ad/ops.hpp"

namespace cnav::train {

namespace {

std::vector<ad::Tensor> param_tensors(const net::ParamList& list) {
  std::vector<ad::Tensor> out;
  out.reserve(list.size());
  for (const auto& [name, t] : list) out.push_back(t);
  return out;
}

}  // namespace

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::St2Orl: return "st2orl";
    case Mode::IqlFlat: return "iqlflat";
    case Mode::Bc: return "bc";
  }
  return "unknown";
}

Mode mode_from_name(const std::string& name) {
  if (name == "st2orl") return Mode::St2Orl;
  if (name == "iqlflat") return Mode::IqlFlat;
  if (name == "bc") return Mode::Bc;
  throw std::invalid_argument("unknown training mode: " + name);
}

double expectile_penalty(double u, double tau) {
  const double w = u < 0.0 ? 1.0 - tau : tau;
  return w * u * u;
}

double q_target(double r, sim::Termination term, double v_next, double v_pre,
                const TrainConfig& cfg) {
  const bool terminal =
      term == sim::Termination::ReachGoal || term == sim::Termination::Collision;
  if (terminal) return r;
  const double discount = cfg.velocity_scaled_discount
                              ? std::pow(cfg.gamma, cfg.delta_t * v_pre)
                              : cfg.gamma;
  return r + discount * v_next;
}

void polyak_update(net::ParamList& target, const net::ParamList& online, double alpha) {
  if (target.size() != online.size())
    throw ad::UsageError("polyak_update: parameter lists differ in size");
  for (size_t k = 0; k < target.size(); ++k) {
    auto& t = target[k].second.values();
    const auto& o = online[k].second.values();
    for (size_t i = 0; i < t.size(); ++i) t[i] = (1.0 - alpha) * t[i] + alpha * o[i];
  }
}

struct Trainer::Batch {
  int size = 0;
  ad::Tensor joint;        // [B,3,H,7]
  ad::Tensor robot;        // [B,6]
  ad::Tensor next_joint;   // [B,3,H,7]
  ad::Tensor next_robot;   // [B,6]
  std::vector<double> actions;  // B*2, the raw dataset actions
  std::vector<double> rewards;
  std::vector<double> v_pre;
  std::vector<sim::Termination> terms;
};

Trainer::Trainer(const data::Dataset& dataset, const TrainConfig& cfg,
                 const net::NetConfig& net_cfg)
    : dataset_(dataset), cfg_(cfg), net_cfg_(net_cfg), rng_(cfg.seed) {
  if (dataset_.size() == 0) throw ad::UsageError("trainer: empty dataset");
  net_cfg_.validate();
  const int h = dataset_.human_count();
  const net::EncoderKind enc =
      cfg_.mode == Mode::IqlFlat ? net::EncoderKind::Flat : net::EncoderKind::St2;

  if (cfg_.mode != Mode::Bc) {
    q_ = std::make_unique<net::QNetwork>(net_cfg_, enc, h, rng_);
    q_target_ = std::make_unique<net::QNetwork>(net_cfg_, enc, h, rng_);
    q_target_->copy_values_from(*q_);
    v_ = std::make_unique<net::VNetwork>(net_cfg_, enc, h, rng_);
    q_params_ = q_->params("q");
    q_target_params_ = q_target_->params("q_target");
    q_adam_ = std::make_unique<ad::Adam>(param_tensors(q_params_),
                                         ad::AdamConfig{.learning_rate = cfg_.learning_rate});
    v_adam_ = std::make_unique<ad::Adam>(param_tensors(v_->params("v")),
                                         ad::AdamConfig{.learning_rate = cfg_.learning_rate});
  }
  pi_ = std::make_unique<net::PolicyNetwork>(net_cfg_, enc, h, rng_);
  pi_adam_ = std::make_unique<ad::Adam>(param_tensors(pi_->params("pi")),
                                        ad::AdamConfig{.learning_rate = cfg_.learning_rate});
}

Trainer::~Trainer() = default;

Trainer::Batch Trainer::sample_batch() {
  const int b = cfg_.batch_size;
  const int h = dataset_.human_count();
  const int ped_dim = sim::Observation::kPedDim;
  const int robot_dim = sim::Observation::kRobotDim;
  const int64_t joint_stride = 3LL * h * ped_dim;

  Batch batch;
  batch.size = b;
  std::vector<double> joint(static_cast<size_t>(b) * joint_stride);
  std::vector<double> next_joint(static_cast<size_t>(b) * joint_stride);
  std::vector<double> robot(static_cast<size_t>(b) * robot_dim);
  std::vector<double> next_robot(static_cast<size_t>(b) * robot_dim);
  batch.actions.resize(static_cast<size_t>(b) * 2);
  batch.rewards.resize(b);
  batch.v_pre.resize(b);
  batch.terms.resize(b);

  auto write_peds = [&](double* dst, const std::vector<float>& obs) {
    for (int64_t i = 0; i < static_cast<int64_t>(h) * ped_dim; ++i)
      dst[i] = static_cast<double>(obs[robot_dim + i]);
  };

  for (int s = 0; s < b; ++s) {
    const int64_t k = static_cast<int64_t>(rng_.uniform_index(dataset_.size()));
    const auto& t = dataset_[k];
    const int e = dataset_.step_in_episode(k);

    // Three-step observation window ending at step e, with the episode's
    // first observation repeated while history is short.
    const std::vector<float>* window[3];
    if (e == 0) {
      window[0] = window[1] = window[2] = &t.obs;
    } else if (e == 1) {
      window[0] = window[1] = &dataset_[k - 1].obs;
      window[2] = &t.obs;
    } else {
      window[0] = &dataset_[k - 2].obs;
      window[1] = &dataset_[k - 1].obs;
      window[2] = &t.obs;
    }
    // Next-state window ends at step e+1.
    const std::vector<float>* next_window[3] = {e == 0 ? &t.obs : &dataset_[k - 1].obs, &t.obs,
                                                &t.next_obs};

    double* jd = joint.data() + static_cast<int64_t>(s) * joint_stride;
    double* njd = next_joint.data() + static_cast<int64_t>(s) * joint_stride;
    for (int slot = 0; slot < 3; ++slot) {
      write_peds(jd + slot * h * ped_dim, *window[slot]);
      write_peds(njd + slot * h * ped_dim, *next_window[slot]);
    }
    for (int i = 0; i < robot_dim; ++i) {
      robot[static_cast<size_t>(s) * robot_dim + i] = t.obs[i];
      next_robot[static_cast<size_t>(s) * robot_dim + i] = t.next_obs[i];
    }
    batch.actions[2 * s] = t.action[0];
    batch.actions[2 * s + 1] = t.action[1];
    batch.rewards[s] = t.reward;
    batch.v_pre[s] = t.obs[1];
    batch.terms[s] = t.termination;
  }

  batch.joint = ad::Tensor::constant({b, 3, h, ped_dim}, std::move(joint));
  batch.next_joint = ad::Tensor::constant({b, 3, h, ped_dim}, std::move(next_joint));
  batch.robot = ad::Tensor::constant({b, robot_dim}, std::move(robot));
  batch.next_robot = ad::Tensor::constant({b, robot_dim}, std::move(next_robot));
  return batch;
}

ad::Tensor Trainer::audited_actions(const Batch& batch) {
  audit_.action_queries += batch.size;
  ad::Tensor actions = ad::Tensor::constant({batch.size, 2}, batch.actions);
  if (actions.values() == batch.actions) audit_.dataset_action_queries += batch.size;
  return actions;
}

LossReport Trainer::step_once() {
  Batch batch = sample_batch();
  LossReport report;
  report.iteration = ++iteration_;
  const int b = batch.size;

  std::vector<double> adv(b, 0.0);

  if (cfg_.mode != Mode::Bc) {
    // Q update against r + (1-d) gamma^(dt v_pre) V(s'), V held fixed.
    std::vector<double> y(b);
    {
      ad::NoGradGuard ng;
      const ad::Tensor v_next = v_->forward(batch.next_joint, batch.next_robot);
      for (int i = 0; i < b; ++i)
        y[i] = q_target(batch.rewards[i], batch.terms[i], v_next.values()[i], batch.v_pre[i],
                        cfg_);
    }
    const ad::Tensor q_pred = q_->forward(batch.joint, batch.robot, audited_actions(batch));
    const ad::Tensor y_const = ad::Tensor::constant({b, 1}, y);
    const ad::Tensor q_loss =
        ad::mean_all(ad::scalar_mul(ad::square(ad::sub(q_pred, y_const)), 0.5));
    report.q_loss = q_loss.item();
    q_adam_->zero_grad();
    ad::backward(q_loss);
    q_adam_->step();

    polyak_update(q_target_params_, q_params_, cfg_.polyak);
    if (substep_hook_) substep_hook_("q");
    if (debug_) {
      debug_->y = y;
      debug_->q_pred = q_pred.values();
    }

    // Expectile value regression toward the target network.
    std::vector<double> q_hat(b);
    {
      ad::NoGradGuard ng;
      const ad::Tensor qt = q_target_->forward(batch.joint, batch.robot, audited_actions(batch));
      q_hat = qt.values();
    }
    const ad::Tensor v_pred = v_->forward(batch.joint, batch.robot);
    std::vector<double> weights(b);
    for (int i = 0; i < b; ++i) {
      adv[i] = q_hat[i] - v_pred.values()[i];
      weights[i] = adv[i] < 0.0 ? 1.0 - cfg_.expectile : cfg_.expectile;
    }
    const ad::Tensor q_hat_const = ad::Tensor::constant({b, 1}, q_hat);
    const ad::Tensor w_const = ad::Tensor::constant({b, 1}, weights);
    const ad::Tensor v_loss =
        ad::mean_all(ad::mul(w_const, ad::square(ad::sub(q_hat_const, v_pred))));
    report.v_loss = v_loss.item();
    v_adam_->zero_grad();
    ad::backward(v_loss);
    v_adam_->step();
    if (substep_hook_) substep_hook_("v");
    if (debug_) {
      debug_->q_hat = q_hat;
      debug_->v_pred = v_pred.values();
      debug_->adv = adv;
    }
  }

  // Advantage-weighted regression; weight 1 in behavior-cloning mode.
  std::vector<double> awr(b, 1.0);
  double weight_sum = 0.0;
  int clipped = 0;
  for (int i = 0; i < b; ++i) {
    if (cfg_.mode != Mode::Bc) {
      const double raw = std::exp(cfg_.beta * adv[i]);
      awr[i] = std::min(raw, cfg_.awr_weight_cap);
      if (raw >= cfg_.awr_weight_cap) ++clipped;
    }
    weight_sum += awr[i];
    report.adv_mean += adv[i];
  }
  report.adv_mean /= b;
  report.awr_weight_mean = weight_sum / b;
  report.awr_clip_fraction = static_cast<double>(clipped) / b;

  auto [mean, log_std] = pi_->forward(batch.joint, batch.robot);
  const ad::Tensor logp = pi_->log_prob(mean, log_std, audited_actions(batch));
  const ad::Tensor awr_const = ad::Tensor::constant({b, 1}, awr);
  const ad::Tensor pi_loss = ad::mean_all(ad::mul(awr_const, ad::scalar_mul(logp, -1.0)));
  report.policy_loss = pi_loss.item();
  pi_adam_->zero_grad();
  ad::backward(pi_loss);
  pi_adam_->step();
  if (substep_hook_) substep_hook_("pi");
  if (debug_) {
    debug_->awr_weights = awr;
    debug_->log_probs = logp.values();
    if (cfg_.mode == Mode::Bc) {
      debug_->adv = adv;
      debug_->y.clear();
      debug_->q_pred.clear();
      debug_->q_hat.clear();
      debug_->v_pred.clear();
    }
  }

  if (!std::isfinite(report.q_loss) || !std::isfinite(report.v_loss) ||
      !std::isfinite(report.policy_loss))
    throw NumericError("non-finite loss at iteration " + std::to_string(iteration_) +
                       ": q=" + std::to_string(report.q_loss) +
                       " v=" + std::to_string(report.v_loss) +
                       " pi=" + std::to_string(report.policy_loss));
  return report;
}

void Trainer::run(const ReportFn& on_report, const CheckpointFn& on_checkpoint,
                  int64_t report_every) {
  while (iteration_ < cfg_.iterations) {
    const LossReport report = step_once();
    if (on_report && (report.iteration % report_every == 0 || report.iteration == cfg_.iterations))
      on_report(report);
    if (on_checkpoint && cfg_.checkpoint_every > 0 &&
        (report.iteration % cfg_.checkpoint_every == 0 || report.iteration == cfg_.iterations))
      on_checkpoint(report.iteration);
  }
}

net::ParamList Trainer::checkpoint_params() const {
  net::ParamList out;
  if (cfg_.mode != Mode::Bc) {
    for (auto& p : q_->params("q")) out.push_back(p);
    for (auto& p : q_target_->params("q_target")) out.push_back(p);
    for (auto& p : v_->params("v")) out.push_back(p);
  }
  for (auto& p : pi_->params("pi")) out.push_back(p);
  return out;
}

void Trainer::restore(const std::string& checkpoint_path) {
  const auto blocks = ad::load_checkpoint(checkpoint_path);
  ad::restore_params(blocks, checkpoint_params());
}

double Trainer::dataset_log_likelihood() {
  ad::NoGradGuard ng;
  const int h = dataset_.human_count();
  const int ped_dim = sim::Observation::kPedDim;
  const int robot_dim = sim::Observation::kRobotDim;
  const int64_t joint_stride = 3LL * h * ped_dim;
  const int64_t n = dataset_.size();
  const int chunk = 256;

  double total = 0.0;
  for (int64_t base = 0; base < n; base += chunk) {
    const int b = static_cast<int>(std::min<int64_t>(chunk, n - base));
    std::vector<double> joint(static_cast<size_t>(b) * joint_stride);
    std::vector<double> robot(static_cast<size_t>(b) * robot_dim);
    std::vector<double> actions(static_cast<size_t>(b) * 2);
    for (int s = 0; s < b; ++s) {
      const int64_t k = base + s;
      const auto& t = dataset_[k];
      const int e = dataset_.step_in_episode(k);
      const std::vector<float>* window[3];
      if (e == 0) {
        window[0] = window[1] = window[2] = &t.obs;
      } else if (e == 1) {
        window[0] = window[1] = &dataset_[k - 1].obs;
        window[2] = &t.obs;
      } else {
        window[0] = &dataset_[k - 2].obs;
        window[1] = &dataset_[k - 1].obs;
        window[2] = &t.obs;
      }
      double* jd = joint.data() + static_cast<int64_t>(s) * joint_stride;
      for (int slot = 0; slot < 3; ++slot)
        for (int64_t i = 0; i < static_cast<int64_t>(h) * ped_dim; ++i)
          jd[slot * h * ped_dim + i] = static_cast<double>((*window[slot])[robot_dim + i]);
      for (int i = 0; i < robot_dim; ++i)
        robot[static_cast<size_t>(s) * robot_dim + i] = t.obs[i];
      actions[2 * s] = t.action[0];
      actions[2 * s + 1] = t.action[1];
    }
    auto [mean, log_std] = pi_->forward(ad::Tensor::constant({b, 3, h, ped_dim}, std::move(joint)),
                                        ad::Tensor::constant({b, robot_dim}, std::move(robot)));
    const ad::Tensor logp =
        pi_->log_prob(mean, log_std, ad::Tensor::constant({b, 2}, std::move(actions)));
    for (int i = 0; i < b; ++i) total += logp.values()[i];
  }
  return total / static_cast<double>(n);
}

}  // namespace cnav::train
