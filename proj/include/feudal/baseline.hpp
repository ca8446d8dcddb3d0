#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "feudal/envs.hpp"
#include "feudal/nn.hpp"
#include "feudal/rmsprop.hpp"
#include "feudal/rng.hpp"
#include "feudal/tensor.hpp"

namespace feudal {

/// Flat recurrent actor-critic baseline: rectified percept, an LSTM (or a
/// dilated LSTM with pooled output) over [percept, previous action], and
/// linear policy/value heads. Hidden size is the knob for matching the
/// two-level agent's parameter count.
struct BaselineConfig {
  std::size_t obs_dim = 0;
  std::size_t num_actions = 0;
  std::size_t percept_hidden = 64;
  std::size_t hidden = 64;
  std::string recurrent_kind = "lstm";  // "lstm" | "dlstm"
  std::size_t r = 1;                    // dilation radius (dlstm only)
  double gamma = 0.99;
  std::size_t bptt_len = 0;  // 0: take the training section's value
  bool clip_rewards = true;

  void normalize();  // lstm forces r = 1
  void validate() const;
};

struct BaselineStepCache {
  std::size_t episode_step = 0;
  Tensor obs;
  Tensor core_input;  // [z, previous action one-hot]
  Tensor z;
  std::size_t core_index = 0;
  LstmCache lstm_cache;
  Tensor h;
  std::vector<std::size_t> ring_members;
  Tensor pooled;  // mean over the output ring (== h when r = 1)
  Tensor logits;
  Tensor log_pi;
  Tensor pi;
  double value = 0.0;
};

struct BaselineUpstream {
  Tensor dlogits;
  double dvalue = 0.0;
};

struct BaselineRingEntry {
  std::size_t step = 0;
  Tensor h;
};

struct BaselineRuntimeState {
  std::vector<LstmState> cores;
  std::deque<BaselineRingEntry> output_ring;
  std::size_t step_counter = 0;
  std::size_t prev_action = SIZE_MAX;  // none at episode start
};

struct BaselineStepResult {
  Tensor pi;
  Tensor log_pi;
  double value = 0.0;
};

struct BaselineReplayStep {
  Tensor obs;
  std::size_t action = 0;
  double advantage = 0.0;
  double value_target = 0.0;
};

struct BaselineReplayRequest {
  BaselineRuntimeState initial_state;
  std::vector<BaselineReplayStep> steps;
  double entropy_weight = 0.0;
};

struct BaselineReplayLosses {
  double policy = 0.0;
  double entropy = 0.0;
  double critic = 0.0;
  double total() const { return policy + entropy + critic; }
};

class BaselineAgent {
 public:
  BaselineAgent(const BaselineConfig& config, std::uint64_t init_seed);

  const BaselineConfig& config() const { return config_; }
  ParamList params();
  std::size_t parameter_count();

  void reset_episode();

  BaselineStepResult forward_step(const Tensor& obs, BaselineStepCache* cache);

  /// Records the taken action; it becomes the next step's input.
  void note_action(std::size_t action) { state_.prev_action = action; }

  double eval_bootstrap(const Tensor& obs) const;

  void backward_segment(const std::vector<BaselineStepCache>& caches,
                        const std::vector<BaselineUpstream>& upstream);

  BaselineReplayLosses replay_losses(const BaselineReplayRequest& request);

  const BaselineRuntimeState& runtime() const { return state_; }
  BaselineRuntimeState snapshot_runtime() const { return state_; }
  void restore_runtime(BaselineRuntimeState st) { state_ = std::move(st); }

  LinearLayer percept;
  LstmCell core;
  LinearLayer policy_head;
  LinearLayer value_head;

 private:
  Tensor make_core_input(const Tensor& z, std::size_t prev_action) const;

  BaselineConfig config_;
  BaselineRuntimeState state_;
};

std::size_t baseline_parameter_count(const BaselineConfig& config);

/// Smallest hidden size whose parameter count is nearest the target; used to
/// keep baselines within a few percent of the matched two-level agent.
std::size_t matched_baseline_hidden(const BaselineConfig& base,
                                    std::size_t target_params);

}  // namespace feudal
