#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "feudal/rng.hpp"
#include "feudal/tensor.hpp"

namespace feudal {

/// Feature-vector observation: one-hot position, task cue channels, and the
/// previous step's reward as the final entry.
struct EnvObservation {
  Tensor features;
};

struct EnvStep {
  EnvObservation observation;
  double reward = 0.0;
  bool terminal = false;
  bool trial_boundary = false;  // terminal implies trial_boundary
};

/// Corridor of `length` cells; the forward action taken at the last cell
/// pays +1 and ends the episode. Hitting the step cap ends it with 0.
struct ChainSpec {
  std::size_t length = 12;
  std::size_t step_cap = 0;  // 0 -> 4 * length (4x the shortest episode)
};

/// Stem of `corridor_len` cells ending in a junction with two baited arms.
/// The rewarded arm is fixed per episode and signalled only by the cue
/// channels of each trial's first observation.
struct TMazeSpec {
  std::size_t corridor_len = 4;
  bool variable_len = false;  // T-maze+: per-trial corridor length in [1, L]
  std::size_t trials_per_episode = 6;
  std::size_t trial_step_cap = 0;  // 0 -> 4 * (corridor_len + 1)
};

/// Open grid with a platform hidden at a random cell for the whole episode;
/// the agent respawns at a random cell each trial and is paid +1 on
/// stepping onto the platform.
struct WaterMazeSpec {
  std::size_t grid = 5;
  std::size_t trials_per_episode = 6;
  std::size_t trial_step_cap = 0;  // 0 -> 4 * shortest path for the trial
};

/// Deterministic, seedable episodic environment. Identical (seed, action
/// sequence) pairs produce bit-identical step sequences.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::size_t obs_dim() const = 0;
  virtual std::size_t num_actions() const = 0;

  /// Starts a new episode (hidden quantities drawn from the internal rng)
  /// and returns its first observation.
  virtual EnvObservation reset_episode() = 0;

  virtual EnvStep step(std::size_t action) = 0;

  /// Analytic or search-based optimal episodic return; the eval yardstick.
  virtual double optimal_return() const = 0;

  /// Hard upper bound on episode length implied by the spec's step caps.
  virtual std::size_t max_episode_steps() const = 0;

  virtual std::string name() const = 0;
};

std::unique_ptr<Environment> make_chain(const ChainSpec& spec,
                                        std::uint64_t seed);
std::unique_ptr<Environment> make_tmaze(const TMazeSpec& spec,
                                        std::uint64_t seed);
std::unique_ptr<Environment> make_water_maze(const WaterMazeSpec& spec,
                                             std::uint64_t seed);

/// Tagged union of the three environment specs.
struct EnvSpec {
  std::string kind;  // "chain" | "tmaze" | "watermaze"
  ChainSpec chain;
  TMazeSpec tmaze;
  WaterMazeSpec watermaze;
};

std::unique_ptr<Environment> make_env(const EnvSpec& spec, std::uint64_t seed);

/// Shortest-path length on an open W x W grid (4-neighbour moves).
std::size_t grid_bfs_distance(std::size_t width, std::size_t from_cell,
                              std::size_t to_cell);

/// Debug probes into otherwise-hidden episode state (throw on wrong type).
std::size_t water_maze_platform_cell(const Environment& env);
std::size_t tmaze_rewarded_arm(const Environment& env);

}  // namespace feudal
