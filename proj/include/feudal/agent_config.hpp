#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace feudal {

/// How the Manager's goal pathway is wired and trained.
///   full_fun       - directional goals, alignment update, intrinsic reward
///   non_feudal     - same network, but goals are trained by gradients coming
///                    from the Worker and no intrinsic reward is used
///   absolute_goals - goals are unnormalized targets; alignment and intrinsic
///                    reward compare states against the goal itself
enum class FunMode { full_fun, non_feudal, absolute_goals };

std::string to_string(FunMode mode);
FunMode fun_mode_from_string(const std::string& s);

/// Architecture and interaction constants for the two-level agent.
struct AgentConfig {
  std::size_t obs_dim = 0;
  std::size_t num_actions = 0;

  std::size_t d = 32;   // Manager latent dimension
  std::size_t k = 16;   // goal-embedding dimension, k < d
  std::size_t c = 10;   // horizon: goal pooling window and alignment lookahead
  std::size_t r = 10;   // dilation radius of the Manager's recurrent core

  std::size_t percept_hidden = 64;
  std::size_t worker_hidden = 64;
  std::size_t manager_hidden = 64;

  double alpha = 0.8;          // intrinsic reward weight in [0, 1]
  double epsilon_goal = 0.05;  // probability of emitting a random unit goal

  double gamma_worker = 0.95;
  double gamma_manager = 0.99;

  FunMode mode = FunMode::full_fun;
  bool no_dilation = false;  // forces r = 1
  bool clip_rewards = true;  // clip extrinsic rewards to [-1, +1]

  /// Applies mode-implied constraints (no_dilation => r = 1).
  void normalize();

  /// Throws std::invalid_argument on violated invariants.
  void validate() const;
};

}  // namespace feudal
