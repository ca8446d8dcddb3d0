#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "feudal/baseline.hpp"
#include "feudal/envs.hpp"
#include "feudal/fun_agent.hpp"
#include "feudal/goal_history.hpp"
#include "feudal/rmsprop.hpp"

namespace feudal {

struct TrainConfig {
  std::size_t bptt_len = 80;  // K: forward passes per truncated-BPTT window
  double learning_rate = 1e-3;
  double entropy_weight = 1e-3;
  double rmsprop_decay = 0.99;
  // Large epsilon keeps the adaptive step bounded once gradients shrink;
  // tiny values turn RMSProp into sign-steps and destabilize converged
  // policies.
  double rmsprop_epsilon = 0.1;
  std::size_t total_steps = 100000;
  std::size_t eval_interval = 2000;
  std::uint64_t seed = 1;
  bool anneal_lr = false;  // linearly anneal to half the initial rate
  bool manager_critic_to_trunk = true;

  void validate() const;
  double lr_at(std::size_t step) const;
};

/// Backward recursion R_t = r_t + gamma * R_{t+1}, seeded with `bootstrap`
/// past the final entry. A terminal step zeroes the tail instead.
std::vector<double> discounted_returns(const std::vector<double>& rewards,
                                       const std::vector<char>& terminals,
                                       double gamma, double bootstrap);

/// The i = 1..min(c, t) alignment terms d_cos(s_t - s_{t-i}, g_{t-i}) (or
/// d_cos(s_t, g_{t-i}) for absolute goals). The history's newest entry must
/// be step t.
std::vector<double> intrinsic_reward_terms(const GoalHistory& history,
                                           std::size_t t, std::size_t c,
                                           bool absolute_goals);

/// Mean of the alignment terms with the divisor fixed at c, so early steps
/// (t < c) are averaged as if the missing lookback terms were zero.
double intrinsic_reward(const GoalHistory& history, std::size_t t,
                        std::size_t c, bool absolute_goals);

/// Per-step environment-facing record of one collected segment.
struct StepData {
  std::size_t action = 0;
  double reward_raw = 0.0;
  double reward = 0.0;     // clipped when the agent config asks for it
  double intrinsic = 0.0;  // r^I on arrival at this step's state
  bool terminal = false;
  bool trial_boundary = false;
};

/// One truncated-BPTT window: forward caches, environment records, and the
/// cut-state evaluation that seeds bootstraps and resolves the horizon of
/// step T - c. Carryover for goal pooling and the intrinsic lookback lives
/// inside initial_state (goal history and pooling ring snapshots).
struct RolloutSegment {
  FunRuntimeState initial_state;
  std::vector<FunStepCache> caches;
  std::vector<StepData> steps;
  bool ended_terminal = false;
  BootstrapEval cut;           // state after the last recorded action
  double cut_intrinsic = 0.0;  // r^I at the cut state
};

/// Everything derived from a collected segment before gradients flow.
struct SegmentSignals {
  std::vector<double> returns_extrinsic;  // gamma_worker
  std::vector<double> returns_intrinsic;  // gamma_worker
  std::vector<double> returns_manager;    // gamma_manager
  std::vector<double> adv_worker;         // A^D
  std::vector<double> adv_manager;        // A^M where the update is active
  std::vector<char> manager_update;       // alignment term active at step t
  std::vector<Tensor> alignment_target;   // s_{t+c} - s_t (or s_{t+c})
  std::vector<double> alignment_dcos;     // d_cos at active steps, else 0
  std::size_t skipped_manager = 0;        // horizon unresolved at the tail
  std::size_t excluded_goal_steps = 0;    // sampled/degenerate goals
  bool train_vm = true;
  bool train_vi = true;
};

SegmentSignals compute_segment_signals(const RolloutSegment& segment,
                                       const AgentConfig& acfg);

/// Loss upstreams for the agent's reverse pass. Exposed separately so the
/// gradient tests can target single loss families.
enum class LossMask : unsigned {
  policy = 1,
  entropy = 2,
  critics = 4,
  alignment = 8,
  all = 15,
};

std::vector<StepUpstream> build_upstreams(const RolloutSegment& segment,
                                          const SegmentSignals& signals,
                                          const AgentConfig& acfg,
                                          double entropy_weight,
                                          unsigned loss_mask);

/// Accumulates the full segment gradient into the agent's parameter grads
/// (callers zero them first).
void accumulate_segment_gradients(FunAgent& agent,
                                  const RolloutSegment& segment,
                                  const SegmentSignals& signals,
                                  const TrainConfig& tcfg,
                                  unsigned loss_mask = static_cast<unsigned>(LossMask::all));

/// Packages the segment for FunAgent::replay_losses with the same constants
/// the analytic backward uses; the finite-difference oracle differentiates
/// the replayed loss (summing whichever ReplayLosses fields match the
/// analytic side's loss mask).
ReplayRequest make_replay_request(const RolloutSegment& segment,
                                  const SegmentSignals& signals,
                                  const AgentConfig& acfg,
                                  const TrainConfig& tcfg);

/// Rolls the agent forward for up to `tcfg.bptt_len` steps or until a
/// terminal signal, recording everything the backward pass needs. `obs` is
/// the current observation and is left at the cut state's observation.
RolloutSegment collect_segment(FunAgent& agent, Environment& env, Rng& rng,
                               Tensor& obs, const TrainConfig& tcfg);

/// Replays a fixed action sequence instead of sampling (the environment is
/// deterministic, so records match a live run that chose those actions).
RolloutSegment collect_segment_forced(FunAgent& agent, Environment& env,
                                      const std::vector<std::size_t>& actions,
                                      Tensor& obs);

struct SegmentMetrics {
  std::size_t steps = 0;
  std::size_t episodes_finished = 0;
  double episode_return_sum = 0.0;  // raw extrinsic, summed over finished episodes
  double intrinsic_sum = 0.0;
  double entropy_sum = 0.0;
  double vloss_m_sum = 0.0, vloss_e_sum = 0.0, vloss_i_sum = 0.0;
  std::size_t skipped_manager = 0;
};

/// One full training iteration: collect, compute signals, backprop, step.
SegmentMetrics train_segment(FunAgent& agent, Environment& env, Rng& rng,
                             Tensor& obs, double& episode_return_acc,
                             RmsProp& opt, const TrainConfig& tcfg,
                             std::size_t steps_done);

/// Numerical identity between the alignment update direction and the
/// log-likelihood gradient of the unit-sphere directional transition model
/// (normalizer dropped; it does not depend on the emitted direction).
/// `max_abs_deviation` is over all parameter gradients, both routes.
struct TpgReport {
  double max_abs_deviation = 0.0;
  std::vector<double> dcos_values;  // one per checked step
};

TpgReport transition_pg_equivalence_check(FunAgent& agent,
                                          const std::vector<Tensor>& observations,
                                          const std::vector<double>& advantages);

// --- flat baseline training (same loop shape, single level) ---

struct BaselineRolloutSegment {
  BaselineRuntimeState initial_state;
  std::vector<BaselineStepCache> caches;
  std::vector<StepData> steps;
  bool ended_terminal = false;
  double cut_value = 0.0;
};

BaselineRolloutSegment baseline_collect_segment(BaselineAgent& agent,
                                                Environment& env, Rng& rng,
                                                Tensor& obs,
                                                std::size_t max_steps);

SegmentMetrics baseline_train_segment(BaselineAgent& agent, Environment& env,
                                      Rng& rng, Tensor& obs,
                                      double& episode_return_acc, RmsProp& opt,
                                      const TrainConfig& tcfg,
                                      std::size_t steps_done);

}  // namespace feudal
