#include "feudal/envs.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>
#include <vector>

namespace feudal {

namespace {

void check_action(std::size_t action, std::size_t num_actions) {
  if (action >= num_actions) {
    throw std::invalid_argument("step: invalid action index " +
                                std::to_string(action));
  }
}

class ChainEnv final : public Environment {
 public:
  ChainEnv(const ChainSpec& spec, std::uint64_t seed)
      : spec_(spec), rng_(seed) {
    if (spec_.length < 1) {
      throw std::invalid_argument("chain: length must be >= 1");
    }
    if (spec_.step_cap == 0) spec_.step_cap = 4 * spec_.length;
  }

  std::size_t obs_dim() const override { return spec_.length + 1; }
  std::size_t num_actions() const override { return 2; }  // 0 back, 1 forward
  std::string name() const override { return "chain"; }
  std::size_t max_episode_steps() const override { return spec_.step_cap; }
  double optimal_return() const override { return 1.0; }

  EnvObservation reset_episode() override {
    pos_ = 0;
    steps_ = 0;
    prev_reward_ = 0.0;
    done_ = false;
    return observe();
  }

  EnvStep step(std::size_t action) override {
    check_action(action, num_actions());
    if (done_) throw std::logic_error("chain: step after terminal");
    double reward = 0.0;
    bool terminal = false;
    if (action == 1) {
      if (pos_ + 1 == spec_.length) {
        reward = 1.0;  // exits the corridor
        terminal = true;
      } else {
        ++pos_;
      }
    } else if (pos_ > 0) {
      --pos_;
    }
    ++steps_;
    if (!terminal && steps_ >= spec_.step_cap) terminal = true;
    prev_reward_ = reward;
    done_ = terminal;
    return {observe(), reward, terminal, terminal};
  }

 private:
  EnvObservation observe() const {
    Tensor f = Tensor::zeros({spec_.length + 1});
    f.data[pos_] = 1.0;
    f.data[spec_.length] = prev_reward_;
    return {std::move(f)};
  }

  ChainSpec spec_;
  Rng rng_;
  std::size_t pos_ = 0;
  std::size_t steps_ = 0;
  double prev_reward_ = 0.0;
  bool done_ = true;
};

// Stem cells 0..L with the junction at cell L. Arm choice at the junction is
// a single collecting action; the trial then restarts at the stem base.
class TMazeEnv final : public Environment {
 public:
  std::size_t rewarded_arm() const { return rewarded_arm_; }

  TMazeEnv(const TMazeSpec& spec, std::uint64_t seed)
      : spec_(spec), rng_(seed) {
    if (spec_.corridor_len < 1 || spec_.trials_per_episode < 1) {
      throw std::invalid_argument("tmaze: sizes must be >= 1");
    }
    if (spec_.trial_step_cap == 0) {
      spec_.trial_step_cap = 4 * (spec_.corridor_len + 1);
    }
  }

  std::size_t obs_dim() const override { return spec_.corridor_len + 1 + 2 + 1; }
  std::size_t num_actions() const override { return 4; }
  std::string name() const override { return "tmaze"; }
  std::size_t max_episode_steps() const override {
    return spec_.trials_per_episode * spec_.trial_step_cap;
  }
  double optimal_return() const override {
    // A cue-following policy collects +1 on every trial.
    return static_cast<double>(spec_.trials_per_episode);
  }

  EnvObservation reset_episode() override {
    rewarded_arm_ = rng_.below(2);  // 0 left, 1 right; fixed for the episode
    trials_done_ = 0;
    prev_reward_ = 0.0;
    done_ = false;
    begin_trial();
    cue_visible_ = false;  // spawn observations never carry the cue
    return observe();
  }

  EnvStep step(std::size_t action) override {
    check_action(action, num_actions());
    if (done_) throw std::logic_error("tmaze: step after terminal");
    // The cue rides on the observation produced by each trial's first step;
    // a respawn observation itself is cue-free.
    cue_visible_ = pending_cue_;
    pending_cue_ = false;
    double reward = 0.0;
    bool trial_over = false;
    const std::size_t junction = spec_.corridor_len;
    switch (action) {
      case 0:  // back
        if (pos_ > trial_start_) --pos_;
        break;
      case 1:  // forward
        if (pos_ < junction) ++pos_;
        break;
      case 2:  // left arm
      case 3:  // right arm
        if (pos_ == junction) {
          std::size_t arm = action - 2;
          reward = (arm == rewarded_arm_) ? 1.0 : -1.0;
          trial_over = true;
        }
        break;
    }
    ++trial_steps_;
    if (!trial_over && trial_steps_ >= spec_.trial_step_cap) {
      trial_over = true;  // cap exhaustion pays nothing
    }
    bool terminal = false;
    if (trial_over) {
      ++trials_done_;
      terminal = trials_done_ >= spec_.trials_per_episode;
      if (!terminal) begin_trial();
    }
    prev_reward_ = reward;
    done_ = terminal;
    return {observe(), reward, terminal, trial_over};
  }

 private:
  void begin_trial() {
    std::size_t len = spec_.corridor_len;
    if (spec_.variable_len) len = 1 + rng_.below(spec_.corridor_len);
    trial_start_ = spec_.corridor_len - len;
    pos_ = trial_start_;
    trial_steps_ = 0;
    pending_cue_ = true;
  }

  EnvObservation observe() const {
    Tensor f = Tensor::zeros({obs_dim()});
    f.data[pos_] = 1.0;
    if (cue_visible_) {
      f.data[spec_.corridor_len + 1 + rewarded_arm_] = 1.0;
    }
    f.data[obs_dim() - 1] = prev_reward_;
    return {std::move(f)};
  }

  TMazeSpec spec_;
  Rng rng_;
  std::size_t rewarded_arm_ = 0;
  std::size_t trials_done_ = 0;
  std::size_t trial_start_ = 0;
  std::size_t pos_ = 0;
  std::size_t trial_steps_ = 0;
  bool cue_visible_ = false;
  bool pending_cue_ = false;
  double prev_reward_ = 0.0;
  bool done_ = true;
};

class WaterMazeEnv final : public Environment {
 public:
  std::size_t platform_cell() const { return platform_; }

  WaterMazeEnv(const WaterMazeSpec& spec, std::uint64_t seed)
      : spec_(spec), rng_(seed) {
    if (spec_.grid < 2 || spec_.trials_per_episode < 1) {
      throw std::invalid_argument("watermaze: grid must be >= 2 and trials >= 1");
    }
  }

  std::size_t obs_dim() const override {
    return spec_.grid * spec_.grid + 4 + 1;
  }
  std::size_t num_actions() const override { return 4; }
  std::string name() const override { return "watermaze"; }
  std::size_t max_episode_steps() const override {
    std::size_t longest = 2 * (spec_.grid - 1);
    std::size_t cap = spec_.trial_step_cap ? spec_.trial_step_cap : 4 * longest;
    return spec_.trials_per_episode * cap;
  }
  double optimal_return() const override {
    // Every platform placement is reachable within its 4x-shortest-path cap
    // (verified by BFS), so an informed policy collects +1 per trial.
    const std::size_t cells = spec_.grid * spec_.grid;
    for (std::size_t p = 0; p < cells; ++p) {
      for (std::size_t s = 0; s < cells; ++s) {
        if (s == p) continue;
        std::size_t d = grid_bfs_distance(spec_.grid, s, p);
        if (d > trial_cap(d)) return 0.0;  // unreachable under the cap
      }
    }
    return static_cast<double>(spec_.trials_per_episode);
  }

  EnvObservation reset_episode() override {
    const std::size_t cells = spec_.grid * spec_.grid;
    platform_ = rng_.below(cells);
    trials_done_ = 0;
    prev_reward_ = 0.0;
    done_ = false;
    begin_trial();
    return observe();
  }

  EnvStep step(std::size_t action) override {
    check_action(action, num_actions());
    if (done_) throw std::logic_error("watermaze: step after terminal");
    const std::size_t w = spec_.grid;
    std::size_t row = pos_ / w, col = pos_ % w;
    switch (action) {
      case 0: if (row > 0) --row; break;      // up
      case 1: if (row + 1 < w) ++row; break;  // down
      case 2: if (col > 0) --col; break;      // left
      case 3: if (col + 1 < w) ++col; break;  // right
    }
    pos_ = row * w + col;
    ++trial_steps_;
    double reward = 0.0;
    bool trial_over = false;
    if (pos_ == platform_) {
      reward = 1.0;
      trial_over = true;
    } else if (trial_steps_ >= cap_) {
      trial_over = true;
    }
    bool terminal = false;
    if (trial_over) {
      ++trials_done_;
      terminal = trials_done_ >= spec_.trials_per_episode;
      if (!terminal) begin_trial();
    }
    prev_reward_ = reward;
    done_ = terminal;
    return {observe(), reward, terminal, trial_over};
  }

 private:
  std::size_t trial_cap(std::size_t shortest) const {
    if (spec_.trial_step_cap) return spec_.trial_step_cap;
    return 4 * std::max<std::size_t>(1, shortest);
  }

  void begin_trial() {
    const std::size_t cells = spec_.grid * spec_.grid;
    do {
      pos_ = rng_.below(cells);
    } while (pos_ == platform_);
    cap_ = trial_cap(grid_bfs_distance(spec_.grid, pos_, platform_));
    trial_steps_ = 0;
  }

  EnvObservation observe() const {
    const std::size_t w = spec_.grid;
    Tensor f = Tensor::zeros({obs_dim()});
    f.data[pos_] = 1.0;
    std::size_t row = pos_ / w, col = pos_ % w;
    double denom = static_cast<double>(w - 1);
    // Wall cues: normalized distance to each boundary.
    f.data[w * w + 0] = static_cast<double>(row) / denom;
    f.data[w * w + 1] = static_cast<double>(w - 1 - row) / denom;
    f.data[w * w + 2] = static_cast<double>(col) / denom;
    f.data[w * w + 3] = static_cast<double>(w - 1 - col) / denom;
    f.data[obs_dim() - 1] = prev_reward_;
    return {std::move(f)};
  }

  WaterMazeSpec spec_;
  Rng rng_;
  std::size_t platform_ = 0;
  std::size_t pos_ = 0;
  std::size_t trials_done_ = 0;
  std::size_t trial_steps_ = 0;
  std::size_t cap_ = 0;
  double prev_reward_ = 0.0;
  bool done_ = true;
};

}  // namespace

std::size_t grid_bfs_distance(std::size_t width, std::size_t from_cell,
                              std::size_t to_cell) {
  if (from_cell == to_cell) return 0;
  const std::size_t cells = width * width;
  std::vector<std::size_t> dist(cells, cells + 1);
  std::deque<std::size_t> frontier{from_cell};
  dist[from_cell] = 0;
  while (!frontier.empty()) {
    std::size_t cur = frontier.front();
    frontier.pop_front();
    if (cur == to_cell) return dist[cur];
    std::size_t row = cur / width, col = cur % width;
    const std::size_t next[4] = {
        row > 0 ? cur - width : cur,
        row + 1 < width ? cur + width : cur,
        col > 0 ? cur - 1 : cur,
        col + 1 < width ? cur + 1 : cur,
    };
    for (std::size_t n : next) {
      if (dist[n] > dist[cur] + 1) {
        dist[n] = dist[cur] + 1;
        frontier.push_back(n);
      }
    }
  }
  return dist[to_cell];
}

std::unique_ptr<Environment> make_chain(const ChainSpec& spec,
                                        std::uint64_t seed) {
  auto env = std::make_unique<ChainEnv>(spec, seed);
  return env;
}

std::unique_ptr<Environment> make_tmaze(const TMazeSpec& spec,
                                        std::uint64_t seed) {
  return std::make_unique<TMazeEnv>(spec, seed);
}

std::unique_ptr<Environment> make_water_maze(const WaterMazeSpec& spec,
                                             std::uint64_t seed) {
  return std::make_unique<WaterMazeEnv>(spec, seed);
}

std::unique_ptr<Environment> make_env(const EnvSpec& spec,
                                      std::uint64_t seed) {
  if (spec.kind == "chain") return make_chain(spec.chain, seed);
  if (spec.kind == "tmaze") return make_tmaze(spec.tmaze, seed);
  if (spec.kind == "watermaze") return make_water_maze(spec.watermaze, seed);
  throw std::invalid_argument("unknown environment kind: " + spec.kind);
}

std::size_t water_maze_platform_cell(const Environment& env) {
  const auto* wm = dynamic_cast<const WaterMazeEnv*>(&env);
  if (!wm) throw std::invalid_argument("not a water maze environment");
  return wm->platform_cell();
}

std::size_t tmaze_rewarded_arm(const Environment& env) {
  const auto* tm = dynamic_cast<const TMazeEnv*>(&env);
  if (!tm) throw std::invalid_argument("not a t-maze environment");
  return tm->rewarded_arm();
}

}  // namespace feudal
