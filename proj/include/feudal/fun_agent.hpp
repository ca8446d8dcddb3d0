#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "feudal/agent_config.hpp"
#include "feudal/goal_history.hpp"
#include "feudal/nn.hpp"
#include "feudal/rng.hpp"
#include "feudal/tensor.hpp"

namespace feudal {

/// Where an emitted goal came from. Only `network` goals carry a gradient
/// path; sampled and degenerate goals are constants.
enum class GoalSource { network, sampled, degenerate };

/// One raw Manager output waiting in the pooling ring.
struct GoalRingEntry {
  std::size_t step = 0;
  Tensor raw;  // pre-pooling Manager output, dimension d
};

/// Recurrent state of the dilated Manager core: r parameter-shared LSTM
/// cores updated round-robin (core = step mod r) plus the ring of recent raw
/// outputs that the pooled goal is averaged over.
struct DilatedLstmState {
  std::vector<LstmState> cores;
  std::deque<GoalRingEntry> output_ring;
  std::size_t step_counter = 0;
};

/// Everything the agent carries between steps of one episode.
struct FunRuntimeState {
  DilatedLstmState manager;
  LstmState worker;
  GoalHistory history;
  Tensor prev_goal;  // fallback when the pooled output degenerates
  std::size_t degenerate_goals = 0;
};

/// Per-step forward intermediates kept for the segment backward pass.
struct FunStepCache {
  std::size_t episode_step = 0;
  Tensor obs;
  Tensor z;  // shared percept output (post-rectifier)
  Tensor s;  // Manager latent (post-rectifier)

  std::size_t core_index = 0;
  LstmCache manager_cache;
  Tensor h_manager;
  Tensor goal_raw;                        // goal head output
  std::vector<std::size_t> ring_members;  // episode steps pooled at this step
  Tensor pooled;
  double pooled_norm = 0.0;
  Tensor goal;  // emitted g_t
  GoalSource goal_source = GoalSource::network;

  std::vector<std::size_t> window_members;  // episode steps summed into w_t
  Tensor goal_window_sum;
  Tensor w;

  LstmCache worker_cache;
  Tensor h_worker;
  Tensor action_embed;  // U_t, [num_actions x k]
  Tensor logits;
  Tensor log_pi;
  Tensor pi;

  double v_manager = 0.0;
  double v_extrinsic = 0.0;
  double v_intrinsic = 0.0;
};

struct FunStepResult {
  Tensor pi;
  Tensor log_pi;
  Tensor goal;
  Tensor latent;
  double v_manager = 0.0;
  double v_extrinsic = 0.0;
  double v_intrinsic = 0.0;
  GoalSource goal_source = GoalSource::network;
};

/// State-value estimates and latent at a segment cut or terminal state,
/// computed without mutating the runtime state.
struct BootstrapEval {
  double v_manager = 0.0;
  double v_extrinsic = 0.0;
  double v_intrinsic = 0.0;
  Tensor latent;
};

/// Loss-side upstream signals for one recorded step.
struct StepUpstream {
  Tensor dlogits;                // policy gradient + entropy, size |a|
  double dv_manager = 0.0;       // d loss / d V^M
  double dv_extrinsic = 0.0;
  double dv_intrinsic = 0.0;
  Tensor dgoal;                  // alignment loss gradient w.r.t. g_t (may be empty)
};

/// Replays a recorded segment under the current parameters and reports the
/// scalar training losses, holding the same quantities constant that the
/// analytic backward pass treats as constants. This is the probe the
/// finite-difference gradient checks differentiate.
struct ReplayStep {
  Tensor obs;
  std::size_t action = 0;
  GoalSource goal_source = GoalSource::network;
  Tensor recorded_goal;  // used verbatim when the source is not `network`

  double advantage = 0.0;  // A^D, constant in the loss
  double return_manager = 0.0;
  double return_extrinsic = 0.0;
  double return_intrinsic = 0.0;

  bool manager_update = false;   // alignment term active at this step
  double manager_advantage = 0.0;
  Tensor frozen_delta_s;           // alignment target from the base rollout
  Tensor frozen_h_manager;         // for the detached-critic variant
  Tensor frozen_goal_window_sum;   // base window sum, used when frozen
};

struct ReplayRequest {
  FunRuntimeState initial_state;
  std::vector<ReplayStep> steps;
  double entropy_weight = 0.0;
  bool train_vm = true;  // manager critic loss active
  bool train_vi = true;  // intrinsic critic loss active
  bool vm_critic_to_trunk = true;
  // The Worker treats the pooled goal window as a constant except in the
  // non-feudal wiring; replays must match.
  bool freeze_goal_window = true;
};

struct ReplayLosses {
  double policy = 0.0;     // sum of -A * log pi(a)
  double entropy = 0.0;    // sum of -beta * H(pi)
  double critic = 0.0;     // sum of squared-error value losses
  double alignment = 0.0;  // sum of -A^M * d_cos terms
  double total() const { return policy + entropy + critic + alignment; }
};

/// The feudal two-level agent. A shared rectified linear percept feeds both
/// levels; the Manager maps it into its own latent space, runs the dilated
/// LSTM and emits pooled, normalized goal directions; the Worker runs an
/// LSTM over the percept and scores actions against a linear, bias-free
/// embedding of the summed recent goals.
class FunAgent {
 public:
  FunAgent(const AgentConfig& config, std::uint64_t init_seed);

  const AgentConfig& config() const { return config_; }

  /// Stable-order registry over every parameter tensor.
  ParamList params();
  std::size_t parameter_count();

  void reset_episode();

  /// Runs one environment step's forward pass, mutating the runtime state.
  /// `rng` drives goal exploration; it is only consumed on live steps
  /// (pass `forced` to replay a recorded decision instead).
  FunStepResult forward_step(const Tensor& obs, Rng* rng,
                             const FunStepCache* forced, FunStepCache* cache);

  /// Value estimates at `obs` without advancing the runtime state.
  BootstrapEval eval_bootstrap(const Tensor& obs) const;

  /// Reverse pass over one recorded segment. `attach_goals_to_worker` routes
  /// the Worker's goal-embedding gradient into the Manager's goal graph (the
  /// non-feudal wiring); otherwise stored goals are constants on that path.
  void backward_segment(const std::vector<FunStepCache>& caches,
                        const std::vector<StepUpstream>& upstream,
                        bool attach_goals_to_worker,
                        bool vm_critic_to_trunk);

  ReplayLosses replay_losses(const ReplayRequest& request);

  const FunRuntimeState& runtime() const { return state_; }
  FunRuntimeState snapshot_runtime() const { return state_; }
  void restore_runtime(FunRuntimeState state) { state_ = std::move(state); }

  // Sub-forward pieces, exposed for targeted tests.
  Tensor percept_forward(const Tensor& obs) const;
  Tensor mspace_forward(const Tensor& z) const;
  Tensor embed_goal_window(const Tensor& goal_sum) const;

  LinearLayer percept;
  LinearLayer mspace;
  LstmCell manager_cell;
  LinearLayer goal_head;
  LinearLayer phi;       // goal embedding, no bias by construction
  LstmCell worker_cell;
  LinearLayer u_head;    // worker action-embedding matrix, flattened
  LinearLayer vm_head;
  LinearLayer ve_head;
  LinearLayer vi_head;

 private:
  struct GoalComputation {
    Tensor raw;
    Tensor pooled;
    double pooled_norm = 0.0;
    Tensor goal;
    GoalSource source = GoalSource::network;
    std::vector<std::size_t> ring_members;
  };

  /// Advances the Manager state (core step, ring push) and emits the goal.
  GoalComputation manager_step(const Tensor& s, DilatedLstmState& manager,
                               const Tensor& prev_goal, Rng* rng,
                               const FunStepCache* forced,
                               LstmCache* cache) const;

  AgentConfig config_;
  FunRuntimeState state_;
  bool freeze_window_ = false;  // replay-only: use recorded window sums
};

/// Samples an action index from a normalized probability vector.
/// Throws if the probabilities do not sum to 1 within 1e-9.
std::size_t act(const Tensor& pi, Rng& rng);

}  // namespace feudal
