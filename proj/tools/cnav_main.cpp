#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cnav/ad/checkpoint.hpp"
#include "cnav/ad/tensor.hpp"
#include "cnav/data/dataset.hpp"
#include "cnav/eval/eval.hpp"
#include "cnav/eval/render.hpp"
#include "cnav/train/trainer.hpp"
#include "cnav/util/config.hpp"

namespace {

constexpr const char* kVersion = "cnav 0.1.0";

// Exit codes: 0 ok, 1 usage, 2 config, 3 file format, 4 numeric divergence.
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumeric = 4;

using json = nlohmann::ordered_json;

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

cnav::sim::ScenarioConfig scenario_from(const std::string& flag_name, uint64_t seed,
                                        const cnav::util::Config& cfg) {
  const std::string name =
      flag_name.empty() ? cfg.get_string("scenario.kind", "simple") : flag_name;
  cnav::sim::ScenarioConfig sc;
  if (name == "simple")
    sc = cnav::sim::ScenarioConfig::simple();
  else if (name == "complex")
    sc = cnav::sim::ScenarioConfig::complex();
  else
    throw cnav::util::ConfigError("unknown scenario '" + name + "' (simple|complex)");
  sc.time_limit = cfg.get_double("scenario.time_limit", sc.time_limit);
  sc.rng_seed = seed;
  return sc;
}

cnav::net::NetConfig net_config_from(const cnav::util::Config& cfg) {
  cnav::net::NetConfig nc;
  nc.embed_dim = static_cast<int>(cfg.get_int("net.embed_dim", nc.embed_dim));
  nc.head_count = static_cast<int>(cfg.get_int("net.heads", nc.head_count));
  nc.fnn_hidden = static_cast<int>(cfg.get_int("net.fnn_hidden", nc.fnn_hidden));
  nc.head_hidden = static_cast<int>(cfg.get_int("net.head_hidden", nc.head_hidden));
  return nc;
}

void write_manifest(const std::string& path, const json& fields) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw cnav::util::ConfigError("cannot write manifest " + path);
  os << fields.dump(2) << "\n";
}

json config_snapshot(const cnav::util::Config& cfg) {
  json snap = json::object();
  for (const auto& [k, v] : cfg.entries()) snap[k] = v;
  return snap;
}

struct CollectArgs {
  std::string scenario;
  uint64_t capacity = 500000;
  uint64_t seed = 0;
  std::string out;
  double noise_std = 0.1;
  double safety_space = 0.2;
  std::string config_path;
};

int run_collect(const CollectArgs& args) {
  cnav::util::Config cfg;
  if (!args.config_path.empty()) cfg = cnav::util::Config::from_file(args.config_path);

  cnav::data::CollectConfig cc;
  cc.capacity = args.capacity;
  cc.noise_std = cfg.get_double("collect.noise_std", args.noise_std);
  cc.behavior_safety_space = cfg.get_double("collect.safety_space", args.safety_space);
  const std::string scenario_name =
      args.scenario.empty() ? cfg.get_string("scenario.kind", "simple") : args.scenario;
  cc.scenario = scenario_from(scenario_name, args.seed, cfg);
  cc.rng_seed = args.seed;

  json manifest = {{"tool", kVersion},
                   {"command", "collect"},
                   {"started", timestamp_now()},
                   {"scenario", scenario_name},
                   {"capacity", args.capacity},
                   {"seed", args.seed},
                   {"noise_std", cc.noise_std},
                   {"safety_space", cc.behavior_safety_space},
                   {"dataset", args.out},
                   {"stats", args.out + ".stats.txt"},
                   {"config", config_snapshot(cfg)}};
  write_manifest(args.out + ".manifest.json", manifest);

  const cnav::data::Dataset dataset = cnav::data::collect(cc);
  cnav::data::save(dataset, args.out);

  const auto st = cnav::data::stats(dataset);
  const std::string text = cnav::data::format_stats(st, scenario_name);
  std::cout << text;
  std::ofstream(args.out + ".stats.txt", std::ios::trunc) << text;

  manifest["finished"] = timestamp_now();
  write_manifest(args.out + ".manifest.json", manifest);
  return 0;
}

struct TrainArgs {
  std::string dataset;
  std::string mode = "st2orl";
  std::string config_path;
  uint64_t seed = 1;
  std::string out_dir = "train_out";
  int64_t iterations = -1;
  int64_t checkpoint_every = -1;
  int64_t report_every = 100;
  int threads = 1;
};

void save_trainer_checkpoint(const cnav::train::Trainer& trainer,
                             const cnav::net::NetConfig& nc, int human_count,
                             int64_t dataset_size, const std::string& path) {
  auto params = trainer.checkpoint_params();
  auto meta = [&params](const std::string& name, double v) {
    params.emplace_back(name, cnav::ad::Tensor::constant({1}, {v}));
  };
  const auto mode = trainer.config().mode;
  meta("meta.mode", mode == cnav::train::Mode::St2Orl ? 0.0
                    : mode == cnav::train::Mode::IqlFlat ? 1.0 : 2.0);
  meta("meta.human_count", human_count);
  meta("meta.embed_dim", nc.embed_dim);
  meta("meta.head_count", nc.head_count);
  meta("meta.fnn_hidden", nc.fnn_hidden);
  meta("meta.head_hidden", nc.head_hidden);
  meta("meta.transitions", static_cast<double>(dataset_size));
  meta("meta.iteration", static_cast<double>(trainer.iteration()));
  cnav::ad::save_checkpoint(path, params);
}

int run_train(const TrainArgs& args) {
  cnav::util::Config cfg;
  if (!args.config_path.empty()) cfg = cnav::util::Config::from_file(args.config_path);

  cnav::train::TrainConfig tc;
  tc.mode = cnav::train::mode_from_name(args.mode);
  tc.gamma = cfg.get_double("train.gamma", tc.gamma);
  tc.expectile = cfg.get_double("train.expectile", tc.expectile);
  tc.beta = cfg.get_double("train.beta", tc.beta);
  tc.learning_rate = cfg.get_double("train.learning_rate", tc.learning_rate);
  tc.batch_size = static_cast<int>(cfg.get_int("train.batch_size", tc.batch_size));
  tc.iterations = cfg.get_int("train.iterations", tc.iterations);
  tc.polyak = cfg.get_double("train.polyak", tc.polyak);
  tc.awr_weight_cap = cfg.get_double("train.awr_weight_cap", tc.awr_weight_cap);
  tc.velocity_scaled_discount =
      cfg.get_bool("train.velocity_scaled_discount", tc.velocity_scaled_discount);
  tc.checkpoint_every = cfg.get_int("train.checkpoint_every", tc.checkpoint_every);
  if (args.iterations >= 0) tc.iterations = args.iterations;
  if (args.checkpoint_every >= 0) tc.checkpoint_every = args.checkpoint_every;
  tc.seed = args.seed;

  const cnav::net::NetConfig nc = net_config_from(cfg);
  cnav::ad::set_threads(args.threads);

  const cnav::data::Dataset dataset = cnav::data::load(args.dataset);
  std::filesystem::create_directories(args.out_dir);

  json manifest = {{"tool", kVersion},
                   {"command", "train"},
                   {"started", timestamp_now()},
                   {"dataset", args.dataset},
                   {"mode", args.mode},
                   {"seed", args.seed},
                   {"iterations", tc.iterations},
                   {"batch_size", tc.batch_size},
                   {"gamma", tc.gamma},
                   {"expectile", tc.expectile},
                   {"beta", tc.beta},
                   {"learning_rate", tc.learning_rate},
                   {"polyak", tc.polyak},
                   {"checkpoint_every", tc.checkpoint_every},
                   {"out_dir", args.out_dir},
                   {"loss_log", args.out_dir + "/loss.log"},
                   {"final_checkpoint", args.out_dir + "/ckpt_final.cnavck"},
                   {"config", config_snapshot(cfg)}};
  write_manifest(args.out_dir + "/manifest.json", manifest);

  cnav::train::Trainer trainer(dataset, tc, nc);
  std::ofstream loss_log(args.out_dir + "/loss.log", std::ios::trunc);

  trainer.run(
      [&loss_log](const cnav::train::LossReport& r) {
        char line[256];
        std::snprintf(line, sizeof(line),
                      "iter %lld q_loss %.6f v_loss %.6f policy_loss %.6f adv_mean %.6f "
                      "awr_weight_mean %.6f awr_clip_fraction %.6f\n",
                      static_cast<long long>(r.iteration), r.q_loss, r.v_loss, r.policy_loss,
                      r.adv_mean, r.awr_weight_mean, r.awr_clip_fraction);
        loss_log << line;
        loss_log.flush();
        std::cout << line;
      },
      [&](int64_t iteration) {
        char name[64];
        std::snprintf(name, sizeof(name), "ckpt_%07lld.cnavck",
                      static_cast<long long>(iteration));
        save_trainer_checkpoint(trainer, nc, dataset.human_count(), dataset.size(),
                                args.out_dir + "/" + name);
      },
      args.report_every);

  save_trainer_checkpoint(trainer, nc, dataset.human_count(), dataset.size(),
                          args.out_dir + "/ckpt_final.cnavck");

  manifest["finished"] = timestamp_now();
  write_manifest(args.out_dir + "/manifest.json", manifest);
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string policy;
  std::string scenario;
  int episodes = 500;
  uint64_t seed = 100000;
  std::string out_dir;
  bool dump = false;
  double safety_space = 0.2;
  int64_t transitions = -1;
  int jobs = 1;
  std::string config_path;
};

int run_eval(const EvalArgs& args) {
  cnav::util::Config cfg;
  if (!args.config_path.empty()) cfg = cnav::util::Config::from_file(args.config_path);

  std::unique_ptr<cnav::eval::Policy> policy;
  std::optional<int64_t> transitions;
  if (!args.checkpoint.empty()) {
    auto loaded = cnav::eval::load_policy_checkpoint(args.checkpoint);
    policy = std::make_unique<cnav::eval::LearnedPolicy>(loaded.network, loaded.mode);
    const auto blocks = cnav::ad::load_checkpoint(args.checkpoint);
    for (const auto& b : blocks)
      if (b.name == "meta.transitions") transitions = static_cast<int64_t>(b.values[0]);
  } else if (args.policy == "orca") {
    policy = std::make_unique<cnav::eval::OrcaPolicy>(args.safety_space);
  } else {
    throw cnav::util::ConfigError("eval needs --checkpoint or --policy orca");
  }
  if (args.transitions > 0) transitions = args.transitions;

  const std::string scenario_name =
      args.scenario.empty() ? cfg.get_string("scenario.kind", "simple") : args.scenario;
  cnav::eval::SuiteOptions opts;
  opts.scenario = scenario_from(scenario_name, args.seed, cfg);
  opts.episodes = args.episodes;
  opts.base_seed = args.seed;
  opts.training_transitions = transitions;
  opts.jobs = args.jobs;

  json manifest = {{"tool", kVersion},        {"command", "eval"},
                   {"started", timestamp_now()}, {"policy", policy->name()},
                   {"scenario", scenario_name},     {"episodes", args.episodes},
                   {"seed", args.seed},          {"config", config_snapshot(cfg)}};
  if (!args.out_dir.empty()) {
    std::filesystem::create_directories(args.out_dir);
    if (args.dump) opts.dump_dir = args.out_dir + "/trajectories";
    manifest["out_dir"] = args.out_dir;
    manifest["report"] = args.out_dir + "/report.txt";
    write_manifest(args.out_dir + "/manifest.json", manifest);
  }

  const auto report = cnav::eval::run_suite(*policy, opts);
  const std::string text = cnav::eval::format_eval_report(report, policy->name());
  std::cout << text;
  if (!args.out_dir.empty()) {
    std::ofstream(args.out_dir + "/report.txt", std::ios::trunc) << text;
    manifest["finished"] = timestamp_now();
    write_manifest(args.out_dir + "/manifest.json", manifest);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(kVersion) +
               " - offline reinforcement-learning crowd navigation toolkit"};
  app.require_subcommand(1);

  CollectArgs collect_args;
  auto* collect = app.add_subcommand("collect", "Synthesize an offline dataset");
  collect->add_option("--scenario", collect_args.scenario, "simple|complex");
  collect->add_option("--capacity", collect_args.capacity, "transition count");
  collect->add_option("--seed", collect_args.seed, "rng seed");
  collect->add_option("--out", collect_args.out, "output dataset path")->required();
  collect->add_option("--noise-std", collect_args.noise_std, "exploration noise std (m/s)");
  collect->add_option("--safety-space", collect_args.safety_space, "behavior safety space (m)");
  collect->add_option("--config", collect_args.config_path, "key=value config file");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train from a dataset");
  train->add_option("--dataset", train_args.dataset, "dataset file")->required();
  train->add_option("--mode", train_args.mode, "st2orl|iqlflat|bc");
  train->add_option("--config", train_args.config_path, "key=value config file");
  train->add_option("--seed", train_args.seed, "rng seed");
  train->add_option("--out-dir", train_args.out_dir, "output directory");
  train->add_option("--iterations", train_args.iterations, "training iterations");
  train->add_option("--checkpoint-every", train_args.checkpoint_every, "checkpoint cadence");
  train->add_option("--report-every", train_args.report_every, "loss report cadence");
  train->add_option("--threads", train_args.threads, "matmul worker count (results identical)");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a policy over seeded episodes");
  eval->add_option("--checkpoint", eval_args.checkpoint, "trained checkpoint file");
  eval->add_option("--policy", eval_args.policy, "built-in policy name (orca)");
  eval->add_option("--scenario", eval_args.scenario, "simple|complex");
  eval->add_option("--episodes", eval_args.episodes, "episode count");
  eval->add_option("--seed", eval_args.seed, "base seed (episode i uses seed+i)");
  eval->add_option("--out-dir", eval_args.out_dir, "output directory");
  eval->add_flag("--dump", eval_args.dump, "write per-episode trajectory dumps");
  eval->add_option("--safety-space", eval_args.safety_space, "orca safety space (m)");
  eval->add_option("--transitions", eval_args.transitions,
                   "training transitions behind the policy (efficiency column)");
  eval->add_option("--jobs", eval_args.jobs, "evaluation worker count (results identical)");
  eval->add_option("--config", eval_args.config_path, "key=value config file");

  std::string stats_dataset;
  auto* stats = app.add_subcommand("stats", "Print dataset statistics");
  stats->add_option("--dataset", stats_dataset, "dataset file")->required();

  std::string plot_traj, plot_out;
  auto* plot = app.add_subcommand("plot", "Render a trajectory dump to SVG");
  plot->add_option("--trajectory", plot_traj, "trajectory dump file")->required();
  plot->add_option("--out", plot_out, "output SVG path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (collect->parsed()) return run_collect(collect_args);
    if (train->parsed()) return run_train(train_args);
    if (eval->parsed()) return run_eval(eval_args);
    if (stats->parsed()) {
      const auto dataset = cnav::data::load(stats_dataset);
      std::cout << cnav::data::format_stats(cnav::data::stats(dataset), "dataset");
      return 0;
    }
    if (plot->parsed()) {
      cnav::eval::render_trajectory_file(cnav::sim::load_trajectory(plot_traj), plot_out);
      return 0;
    }
  } catch (const cnav::util::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const cnav::data::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const cnav::ad::CheckpointError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const cnav::sim::TrajectoryError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const cnav::train::NumericError& e) {
    std::cerr << "numeric divergence: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
