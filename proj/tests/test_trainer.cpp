#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <map>

#include "cnav/ad/checkpoint.hpp"
#include "cnav/data/dataset.hpp"
#include "cnav/train/trainer.hpp"

using namespace cnav;
using data::Dataset;
using sim::Termination;
using train::Mode;
using train::TrainConfig;
using train::Trainer;

namespace {

Dataset tiny_dataset(uint64_t capacity, uint64_t seed) {
  data::CollectConfig cc;
  cc.capacity = capacity;
  cc.rng_seed = seed;
  cc.scenario = sim::ScenarioConfig::simple();
  return data::collect(cc);
}

net::NetConfig small_net() {
  net::NetConfig cfg;
  cfg.embed_dim = 8;
  cfg.head_count = 2;
  cfg.fnn_hidden = 12;
  cfg.head_hidden = 12;
  return cfg;
}

TrainConfig quick_config(Mode mode, uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.batch_size = 16;
  cfg.seed = seed;
  return cfg;
}

// Numeric 1-D minimizer of the mean expectile penalty over residuals.
double expectile_minimizer(const std::vector<double>& samples, double tau) {
  double lo = -20.0, hi = 20.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
    auto objective = [&](double v) {
      double sum = 0.0;
      for (double q : samples) sum += train::expectile_penalty(q - v, tau);
      return sum / samples.size();
    };
    if (objective(m1) < objective(m2))
      hi = m2;
    else
      lo = m1;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("expectile penalty weights the residual sign asymmetrically") {
  CHECK(train::expectile_penalty(1.0, 0.8) == doctest::Approx(0.8));
  CHECK(train::expectile_penalty(-1.0, 0.8) == doctest::Approx(0.2));
  CHECK(train::expectile_penalty(3.0, 0.5) == doctest::Approx(0.5 * 9.0));
  CHECK(train::expectile_penalty(-3.0, 0.5) == doctest::Approx(0.5 * 9.0));
}

TEST_CASE("q_target: environment terminals do not bootstrap") {
  TrainConfig cfg;
  CHECK(train::q_target(-0.25, Termination::Collision, 123.0, 1.0, cfg) == -0.25);
  CHECK(train::q_target(1.0, Termination::ReachGoal, -7.0, 1.0, cfg) == 1.0);
}

TEST_CASE("q_target: the velocity-scaled discount matches a root oracle") {
  TrainConfig cfg;
  // 0.9^(0.25*1) via two square roots
  const double oracle = std::sqrt(std::sqrt(0.9));
  const double y = train::q_target(0.2, Termination::Running, 1.0, 1.0, cfg);
  CHECK(y == doctest::Approx(0.2 + oracle).epsilon(1e-12));
  CHECK(y == doctest::Approx(1.174).epsilon(1e-4));
}

TEST_CASE("q_target: exponent one recovers plain gamma, and timeout bootstraps") {
  TrainConfig cfg;
  CHECK(train::q_target(0.0, Termination::Running, 1.0, 4.0, cfg) == doctest::Approx(0.9));
  CHECK(train::q_target(0.1, Termination::Timeout, 2.0, 4.0, cfg) ==
        doctest::Approx(0.1 + 0.9 * 2.0));
  cfg.velocity_scaled_discount = false;
  CHECK(train::q_target(0.0, Termination::Running, 1.0, 1.0, cfg) == doctest::Approx(0.9));
}

TEST_CASE("polyak update blends element-wise") {
  auto t = ad::Tensor::parameter({2}, {0.0, 4.0});
  auto o = ad::Tensor::parameter({2}, {2.0, 4.0});
  net::ParamList target{{"p", t}}, online{{"p", o}};

  train::polyak_update(target, online, 0.005);
  CHECK(t.values()[0] == doctest::Approx(0.01));
  CHECK(t.values()[1] == doctest::Approx(4.0));

  t.values() = {0.0, 0.0};
  train::polyak_update(target, online, 1.0);
  CHECK(t.values() == o.values());

  o.values() = {9.0, 9.0};
  train::polyak_update(target, online, 0.0);
  CHECK(t.values()[0] == 2.0);
}

TEST_CASE("batched losses match scalar-loop oracles") {
  const Dataset ds = tiny_dataset(300, 101);
  TrainConfig cfg = quick_config(Mode::St2Orl, 5);
  Trainer trainer(ds, cfg, small_net());
  train::StepDebug dbg;
  trainer.set_debug_sink(&dbg);

  for (int it = 0; it < 3; ++it) {
    const auto report = trainer.step_once();
    const int b = cfg.batch_size;
    REQUIRE(static_cast<int>(dbg.y.size()) == b);

    double q_loss = 0.0, v_loss = 0.0, pi_loss = 0.0;
    for (int i = 0; i < b; ++i) {
      q_loss += 0.5 * (dbg.y[i] - dbg.q_pred[i]) * (dbg.y[i] - dbg.q_pred[i]);
      v_loss += train::expectile_penalty(dbg.q_hat[i] - dbg.v_pred[i], cfg.expectile);
      pi_loss += -dbg.awr_weights[i] * dbg.log_probs[i];
    }
    CHECK(std::fabs(report.q_loss - q_loss / b) < 1e-9);
    CHECK(std::fabs(report.v_loss - v_loss / b) < 1e-9);
    CHECK(std::fabs(report.policy_loss - pi_loss / b) < 1e-9);

    for (int i = 0; i < b; ++i) {
      CHECK(dbg.adv[i] == doctest::Approx(dbg.q_hat[i] - dbg.v_pred[i]).epsilon(1e-12));
      const double raw = std::exp(cfg.beta * dbg.adv[i]);
      CHECK(dbg.awr_weights[i] == doctest::Approx(std::min(raw, cfg.awr_weight_cap)));
    }
  }
}

TEST_CASE("the v_loss minimizer is the tau-expectile, above the mean for tau > 1/2") {
  const std::vector<double> samples{0.0, 10.0};
  const double v_star = expectile_minimizer(samples, 0.8);
  CHECK(v_star == doctest::Approx(8.0).epsilon(1e-3));  // 0.8-expectile of {0,10}
  CHECK(v_star > 5.0);
  CHECK(expectile_minimizer(samples, 0.5) == doctest::Approx(5.0).epsilon(1e-3));
}

TEST_CASE("the expectile minimizer is nondecreasing in tau") {
  Rng rng(7);
  std::vector<double> samples(40);
  for (auto& s : samples) s = rng.normal(1.0, 2.0);
  double prev = -1e9;
  for (double tau : {0.5, 0.7, 0.8, 0.9}) {
    const double v = expectile_minimizer(samples, tau);
    CHECK(v >= prev - 1e-9);
    prev = v;
  }
}

TEST_CASE("awr weights: zero advantage reduces to behavior cloning") {
  CHECK(std::exp(100.0 * 0.0) == 1.0);
  // and beta = 0 ignores the advantage entirely
  const Dataset ds = tiny_dataset(120, 103);
  TrainConfig cfg = quick_config(Mode::St2Orl, 2);
  cfg.beta = 0.0;
  Trainer trainer(ds, cfg, small_net());
  train::StepDebug dbg;
  trainer.set_debug_sink(&dbg);
  trainer.step_once();
  for (double w : dbg.awr_weights) CHECK(w == 1.0);
}

TEST_CASE("awr weights hit the cap under beta = 100") {
  // exp(100 * 0.1) = e^10, far beyond the cap of 100
  CHECK(std::exp(10.0) > 22000.0);
  const Dataset ds = tiny_dataset(120, 104);
  TrainConfig cfg = quick_config(Mode::St2Orl, 3);
  Trainer trainer(ds, cfg, small_net());
  train::StepDebug dbg;
  trainer.set_debug_sink(&dbg);
  double max_weight = 0.0;
  for (int it = 0; it < 30; ++it) {
    const auto report = trainer.step_once();
    for (size_t i = 0; i < dbg.awr_weights.size(); ++i) {
      max_weight = std::max(max_weight, dbg.awr_weights[i]);
      if (dbg.adv[i] >= 0.1) CHECK(dbg.awr_weights[i] == cfg.awr_weight_cap);
    }
    CHECK(report.awr_clip_fraction >= 0.0);
  }
  CHECK(max_weight <= cfg.awr_weight_cap);
}

TEST_CASE("training is reproducible and thread-count independent") {
  const Dataset ds = tiny_dataset(200, 105);
  auto run = [&ds](int threads) {
    ad::set_threads(threads);
    Trainer trainer(ds, quick_config(Mode::St2Orl, 9), small_net());
    for (int i = 0; i < 4; ++i) trainer.step_once();
    std::vector<std::vector<double>> values;
    for (const auto& [name, t] : trainer.checkpoint_params()) values.push_back(t.values());
    ad::set_threads(1);
    return values;
  };
  CHECK(run(1) == run(1));
  CHECK(run(1) == run(2));
}

TEST_CASE("sub-steps only touch their own network") {
  const Dataset ds = tiny_dataset(150, 106);
  Trainer trainer(ds, quick_config(Mode::St2Orl, 4), small_net());

  auto snapshot = [&] {
    std::map<std::string, std::vector<double>> snap;
    for (const auto& [name, t] : trainer.checkpoint_params()) snap[name] = t.values();
    return snap;
  };
  std::map<std::string, std::map<std::string, std::vector<double>>> stages;
  stages["start"] = snapshot();
  trainer.set_substep_hook([&](const std::string& stage) { stages[stage] = snapshot(); });
  trainer.step_once();

  auto changed = [&](const std::string& a, const std::string& b, const std::string& prefix) {
    for (const auto& [name, vals] : stages[a])
      if (name.rfind(prefix, 0) == 0 && vals != stages[b][name]) return true;
    return false;
  };
  // Q step moves q and q_target, not v or pi.
  CHECK(changed("start", "q", "q."));
  CHECK(changed("start", "q", "q_target."));
  CHECK_FALSE(changed("start", "q", "v."));
  CHECK_FALSE(changed("start", "q", "pi."));
  // V step moves only v.
  CHECK(changed("q", "v", "v."));
  CHECK_FALSE(changed("q", "v", "q."));
  CHECK_FALSE(changed("q", "v", "q_target."));
  CHECK_FALSE(changed("q", "v", "pi."));
  // Policy step moves only pi.
  CHECK(changed("v", "pi", "pi."));
  CHECK_FALSE(changed("v", "pi", "q."));
  CHECK_FALSE(changed("v", "pi", "v."));
}

TEST_CASE("no action fed to Q or pi strays from the dataset batch") {
  const Dataset ds = tiny_dataset(150, 107);
  Trainer trainer(ds, quick_config(Mode::St2Orl, 6), small_net());
  for (int i = 0; i < 10; ++i) trainer.step_once();
  const auto& audit = trainer.audit();
  CHECK(audit.action_queries > 0);
  CHECK(audit.action_queries == audit.dataset_action_queries);
}

TEST_CASE("a flat-encoder trainer overfits a tiny dataset") {
  const Dataset ds = tiny_dataset(100, 108);
  TrainConfig cfg = quick_config(Mode::IqlFlat, 12);
  cfg.batch_size = 64;
  Trainer trainer(ds, cfg, small_net());
  double q_loss = 1e9;
  for (int i = 0; i < 1500; ++i) q_loss = trainer.step_once().q_loss;
  CHECK(q_loss < 0.01);
}

TEST_CASE("behavior cloning raises the dataset log-likelihood") {
  const Dataset ds = tiny_dataset(100, 109);
  TrainConfig cfg = quick_config(Mode::Bc, 13);
  Trainer trainer(ds, cfg, small_net());
  const double before = trainer.dataset_log_likelihood();
  for (int i = 0; i < 60; ++i) trainer.step_once();
  CHECK(trainer.dataset_log_likelihood() > before);
}

TEST_CASE("bc mode reports zero critic losses and touches no critic") {
  const Dataset ds = tiny_dataset(80, 110);
  Trainer trainer(ds, quick_config(Mode::Bc, 14), small_net());
  const auto report = trainer.step_once();
  CHECK(report.q_loss == 0.0);
  CHECK(report.v_loss == 0.0);
  for (const auto& [name, t] : trainer.checkpoint_params())
    CHECK(name.rfind("pi.", 0) == 0);
}

TEST_CASE("a non-finite reward aborts with a numeric diagnostic") {
  std::vector<data::Transition> ts;
  for (int i = 0; i < 4; ++i) {
    data::Transition t;
    t.obs.assign(6 + 7, 0.5f);
    t.next_obs.assign(6 + 7, 0.5f);
    t.obs[1] = 1.0f;
    t.reward = i == 2 ? std::numeric_limits<float>::quiet_NaN() : 0.1f;
    t.termination = i == 3 ? Termination::ReachGoal : Termination::Running;
    ts.push_back(std::move(t));
  }
  const Dataset ds(1, std::move(ts));
  TrainConfig cfg = quick_config(Mode::St2Orl, 15);
  cfg.batch_size = 32;  // with replacement, certain to draw the poisoned row
  Trainer trainer(ds, cfg, small_net());
  CHECK_THROWS_AS(trainer.step_once(), train::NumericError);
}

TEST_CASE("checkpoint save and restore round-trips the trainer state") {
  const Dataset ds = tiny_dataset(150, 111);
  Trainer a(ds, quick_config(Mode::St2Orl, 16), small_net());
  for (int i = 0; i < 3; ++i) a.step_once();
  const std::string path =
      (std::filesystem::temp_directory_path() / "cnav_trainer_ck.cnavck").string();
  ad::save_checkpoint(path, a.checkpoint_params());

  Trainer b(ds, quick_config(Mode::St2Orl, 99), small_net());
  b.restore(path);
  for (size_t i = 0; i < a.checkpoint_params().size(); ++i)
    CHECK(a.checkpoint_params()[i].second.values() == b.checkpoint_params()[i].second.values());
  std::filesystem::remove(path);
}
