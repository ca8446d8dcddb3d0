#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "feudal/envs.hpp"
#include "feudal/runconfig.hpp"

namespace feudal {

/// Command-line overrides on top of a config file.
struct CliOverrides {
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::string> out_dir;
};

/// Action-selection interface the evaluator drives; lets tests inject
/// scripted policies next to checkpointed agents.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void reset_episode() = 0;
  virtual std::size_t select_action(const Tensor& obs, Rng& rng,
                                    bool greedy) = 0;
};

struct EvalSummary {
  std::size_t episodes = 0;
  double mean_return = 0.0;
  double optimal_return = 0.0;
  double ratio_to_optimal = 0.0;
};

EvalSummary evaluate_policy(Policy& policy, Environment& env,
                            std::size_t episodes, std::uint64_t seed,
                            bool greedy);

std::unique_ptr<Policy> make_agent_policy(const RunConfig& cfg,
                                          std::uint64_t init_seed,
                                          const std::string& checkpoint_path);

/// Per-seed training run; writes metrics_seed<seed>.csv and
/// checkpoint_seed<seed>.bin under out_dir. Returns the metrics path.
std::string run_training_seed(const RunConfig& cfg, std::uint64_t seed,
                              const std::string& out_dir);

int cmd_train(const std::string& config_path, const CliOverrides& overrides);

struct EvalOptions {
  std::string config_path;
  std::string checkpoint_path;
  std::size_t episodes = 100;
  std::uint64_t seed = 1;
  bool greedy = false;
};

int cmd_eval(const EvalOptions& options);

int cmd_gradcheck(std::uint64_t seed);

/// Ablation modes: non_feudal, absolute_goals, c1, no_dilation, alpha_sweep.
int cmd_ablate(const std::string& config_path, const std::string& mode,
               const CliOverrides& overrides);

/// Applies one ablation mode's flag overrides; throws on unknown modes.
/// alpha_sweep expands into several runs and is handled by cmd_ablate.
RunConfig apply_ablation_mode(RunConfig cfg, const std::string& mode);

}  // namespace feudal
