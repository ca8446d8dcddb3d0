#include "feudal/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "feudal/baseline.hpp"
#include "feudal/checkpoint.hpp"
#include "feudal/fun_agent.hpp"
#include "feudal/gradcheck.hpp"
#include "feudal/log.hpp"
#include "feudal/metrics.hpp"
#include "feudal/training.hpp"

namespace feudal {

namespace {

// Seed-stream roles, kept apart so e.g. adding an env draw never shifts the
// agent's stream.
constexpr std::uint64_t kSeedEnv = 11;
constexpr std::uint64_t kSeedAgentInit = 12;
constexpr std::uint64_t kSeedAgentRng = 13;
constexpr std::uint64_t kSeedEvalEnv = 14;
constexpr std::uint64_t kSeedEvalRng = 15;

class FunPolicy final : public Policy {
 public:
  FunPolicy(const AgentConfig& cfg, std::uint64_t init_seed)
      : agent_(cfg, init_seed) {}

  FunAgent& agent() { return agent_; }

  void reset_episode() override { agent_.reset_episode(); }

  std::size_t select_action(const Tensor& obs, Rng& rng,
                            bool greedy) override {
    FunStepResult res = agent_.forward_step(obs, &rng, nullptr, nullptr);
    if (greedy) {
      return static_cast<std::size_t>(
          std::max_element(res.pi.data.begin(), res.pi.data.end()) -
          res.pi.data.begin());
    }
    return act(res.pi, rng);
  }

 private:
  FunAgent agent_;
};

class BaselinePolicy final : public Policy {
 public:
  BaselinePolicy(const BaselineConfig& cfg, std::uint64_t init_seed)
      : agent_(cfg, init_seed) {}

  BaselineAgent& agent() { return agent_; }

  void reset_episode() override { agent_.reset_episode(); }

  std::size_t select_action(const Tensor& obs, Rng& rng,
                            bool greedy) override {
    BaselineStepResult res = agent_.forward_step(obs, nullptr);
    std::size_t action;
    if (greedy) {
      action = static_cast<std::size_t>(
          std::max_element(res.pi.data.begin(), res.pi.data.end()) -
          res.pi.data.begin());
    } else {
      action = act(res.pi, rng);
    }
    agent_.note_action(action);
    return action;
  }

 private:
  BaselineAgent agent_;
};

void fill_io_dims(RunConfig& cfg) {
  auto env = make_env(cfg.env, 0);
  if (cfg.is_fun()) {
    cfg.agent.obs_dim = env->obs_dim();
    cfg.agent.num_actions = env->num_actions();
    cfg.agent.validate();
  } else {
    cfg.baseline.obs_dim = env->obs_dim();
    cfg.baseline.num_actions = env->num_actions();
    cfg.baseline.validate();
  }
}

}  // namespace

EvalSummary evaluate_policy(Policy& policy, Environment& env,
                            std::size_t episodes, std::uint64_t seed,
                            bool greedy) {
  Rng rng(derive_seed(seed, kSeedEvalRng));
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    policy.reset_episode();
    Tensor obs = env.reset_episode().features;
    double episode_return = 0.0;
    while (true) {
      std::size_t action = policy.select_action(obs, rng, greedy);
      EnvStep es = env.step(action);
      episode_return += es.reward;
      obs = std::move(es.observation.features);
      if (es.terminal) break;
    }
    total += episode_return;
  }
  EvalSummary s;
  s.episodes = episodes;
  s.mean_return = total / static_cast<double>(episodes);
  s.optimal_return = env.optimal_return();
  s.ratio_to_optimal =
      s.optimal_return != 0.0 ? s.mean_return / s.optimal_return : 0.0;
  return s;
}

std::unique_ptr<Policy> make_agent_policy(const RunConfig& cfg,
                                          std::uint64_t init_seed,
                                          const std::string& checkpoint_path) {
  if (cfg.is_fun()) {
    auto policy = std::make_unique<FunPolicy>(cfg.agent, init_seed);
    if (!checkpoint_path.empty()) {
      ParamList params = policy->agent().params();
      load_checkpoint(checkpoint_path, params);
    }
    return policy;
  }
  auto policy = std::make_unique<BaselinePolicy>(cfg.baseline, init_seed);
  if (!checkpoint_path.empty()) {
    ParamList params = policy->agent().params();
    load_checkpoint(checkpoint_path, params);
  }
  return policy;
}

std::string run_training_seed(const RunConfig& cfg, std::uint64_t seed,
                              const std::string& out_dir) {
  auto env = make_env(cfg.env, derive_seed(seed, kSeedEnv));
  Rng rng(derive_seed(seed, kSeedAgentRng));
  RmsProp opt(cfg.train.learning_rate, cfg.train.rmsprop_decay,
              cfg.train.rmsprop_epsilon);

  std::string metrics_path =
      out_dir + "/metrics_seed" + std::to_string(seed) + ".csv";
  std::string checkpoint_path =
      out_dir + "/checkpoint_seed" + std::to_string(seed) + ".bin";
  MetricsWriter writer(metrics_path);

  std::unique_ptr<FunAgent> fun;
  std::unique_ptr<BaselineAgent> baseline;
  if (cfg.is_fun()) {
    fun = std::make_unique<FunAgent>(cfg.agent, derive_seed(seed, kSeedAgentInit));
  } else {
    baseline = std::make_unique<BaselineAgent>(
        cfg.baseline, derive_seed(seed, kSeedAgentInit));
  }

  Tensor obs = env->reset_episode().features;
  double episode_acc = 0.0;
  std::size_t steps = 0;
  std::size_t episodes = 0;
  std::size_t next_flush = cfg.train.eval_interval;
  SegmentMetrics interval{};
  std::size_t skipped_total = 0;

  while (steps < cfg.train.total_steps) {
    SegmentMetrics m;
    if (fun) {
      m = train_segment(*fun, *env, rng, obs, episode_acc, opt, cfg.train,
                        steps);
    } else {
      m = baseline_train_segment(*baseline, *env, rng, obs, episode_acc, opt,
                                 cfg.train, steps);
    }
    steps += m.steps;
    episodes += m.episodes_finished;
    skipped_total += m.skipped_manager;
    interval.steps += m.steps;
    interval.episodes_finished += m.episodes_finished;
    interval.episode_return_sum += m.episode_return_sum;
    interval.intrinsic_sum += m.intrinsic_sum;
    interval.entropy_sum += m.entropy_sum;
    interval.vloss_m_sum += m.vloss_m_sum;
    interval.vloss_e_sum += m.vloss_e_sum;
    interval.vloss_i_sum += m.vloss_i_sum;

    if (steps >= next_flush || steps >= cfg.train.total_steps) {
      MetricsRow row;
      row.step = steps;
      row.episode = episodes;
      double n = static_cast<double>(interval.steps);
      row.ret = interval.episodes_finished
                    ? interval.episode_return_sum /
                          static_cast<double>(interval.episodes_finished)
                    : std::nan("");
      row.intrinsic_return_mean = interval.intrinsic_sum / n;
      row.entropy = interval.entropy_sum / n;
      row.vloss_manager = interval.vloss_m_sum / n;
      row.vloss_extrinsic = interval.vloss_e_sum / n;
      row.vloss_intrinsic = interval.vloss_i_sum / n;
      row.skipped_manager_updates = skipped_total;
      writer.write_row(row);
      writer.flush();
      interval = SegmentMetrics{};
      while (next_flush <= steps) next_flush += cfg.train.eval_interval;
    }
  }

  if (fun) {
    ParamList params = fun->params();
    save_checkpoint(checkpoint_path, params);
  } else {
    ParamList params = baseline->params();
    save_checkpoint(checkpoint_path, params);
  }
  return metrics_path;
}

int cmd_train(const std::string& config_path, const CliOverrides& overrides) {
  RunConfig cfg = load_run_config(config_path);
  if (overrides.seeds) cfg.seeds = *overrides.seeds;
  if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
  fill_io_dims(cfg);

  std::filesystem::create_directories(cfg.out_dir);
  std::vector<std::string> metric_paths;
  for (std::uint64_t seed : cfg.seeds) {
    log_info("training seed " + std::to_string(seed) + " -> " + cfg.out_dir);
    metric_paths.push_back(run_training_seed(cfg, seed, cfg.out_dir));
  }
  auto rows = aggregate_metrics(metric_paths);
  write_aggregate_csv(cfg.out_dir + "/aggregate.csv", rows);
  write_plot_script(cfg.out_dir + "/plot.gp", "aggregate.csv");
  log_info("wrote " + std::to_string(metric_paths.size()) +
           " seed curves and aggregate to " + cfg.out_dir);
  return 0;
}

int cmd_eval(const EvalOptions& options) {
  RunConfig cfg = load_run_config(options.config_path);
  fill_io_dims(cfg);
  auto env = make_env(cfg.env, derive_seed(options.seed, kSeedEvalEnv));
  auto policy = make_agent_policy(cfg, derive_seed(options.seed, kSeedAgentInit),
                                  options.checkpoint_path);
  EvalSummary s = evaluate_policy(*policy, *env, options.episodes,
                                  options.seed, options.greedy);
  std::printf("episodes=%zu mean_return=%.17g optimal_return=%.17g "
              "ratio_to_optimal=%.17g\n",
              s.episodes, s.mean_return, s.optimal_return,
              s.ratio_to_optimal);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  auto results = run_all_gradchecks(seed);
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%-28s cases=%-4zu coords=%-7zu worst_err=%.3e %s\n",
                r.name.c_str(), r.cases, r.coords, r.worst_rel_err,
                r.pass ? "PASS" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

RunConfig apply_ablation_mode(RunConfig cfg, const std::string& mode) {
  if (!cfg.is_fun()) {
    throw std::runtime_error("ablate: config must use agent type 'fun'");
  }
  if (mode == "non_feudal") {
    cfg.agent.mode = FunMode::non_feudal;
  } else if (mode == "absolute_goals") {
    cfg.agent.mode = FunMode::absolute_goals;
  } else if (mode == "c1") {
    cfg.agent.c = 1;
  } else if (mode == "no_dilation") {
    cfg.agent.no_dilation = true;
    cfg.agent.normalize();
  } else {
    throw std::runtime_error("ablate: unknown mode '" + mode + "'");
  }
  return cfg;
}

int cmd_ablate(const std::string& config_path, const std::string& mode,
               const CliOverrides& overrides) {
  RunConfig base = load_run_config(config_path);
  if (overrides.seeds) base.seeds = *overrides.seeds;
  if (overrides.out_dir) base.out_dir = *overrides.out_dir;

  auto run_tagged = [&](RunConfig cfg, const std::string& tag) {
    cfg.out_dir += "/" + tag;
    fill_io_dims(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    std::vector<std::string> paths;
    for (std::uint64_t seed : cfg.seeds) {
      log_info("ablation '" + tag + "' seed " + std::to_string(seed));
      paths.push_back(run_training_seed(cfg, seed, cfg.out_dir));
    }
    auto rows = aggregate_metrics(paths);
    write_aggregate_csv(cfg.out_dir + "/aggregate.csv", rows);
    write_plot_script(cfg.out_dir + "/plot.gp", "aggregate.csv");
  };

  if (mode == "alpha_sweep") {
    for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      RunConfig cfg = base;
      cfg.agent.alpha = alpha;
      char tag[32];
      std::snprintf(tag, sizeof(tag), "alpha_%.2f", alpha);
      run_tagged(cfg, tag);
    }
    return 0;
  }
  run_tagged(apply_ablation_mode(base, mode), mode);
  return 0;
}

}  // namespace feudal
