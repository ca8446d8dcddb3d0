#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "feudal/tensor.hpp"

namespace feudal {

/// One remembered (goal, latent) pair, tagged with the episode step that
/// produced it so segment backward passes can tell live entries from
/// constants carried over an earlier truncation cut.
struct GoalHistoryEntry {
  std::size_t step = 0;
  Tensor goal;
  Tensor latent;
};

/// Sliding window of the last `horizon + 1` emitted goals and Manager
/// latents. Feeds the goal-pooling sum and the intrinsic-reward lookback.
class GoalHistory {
 public:
  GoalHistory() = default;
  GoalHistory(std::size_t horizon, std::size_t dim)
      : horizon_(horizon), dim_(dim) {}

  void reset() { entries_.clear(); }

  void push(std::size_t step, Tensor goal, Tensor latent) {
    entries_.push_back({step, std::move(goal), std::move(latent)});
    while (entries_.size() > horizon_ + 1) entries_.pop_front();
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t horizon() const { return horizon_; }
  std::size_t dim() const { return dim_; }
  const GoalHistoryEntry& entry(std::size_t i) const { return entries_[i]; }
  const GoalHistoryEntry& back() const { return entries_.back(); }

  /// Sum of all stored goals (at most horizon + 1 of them; fewer near the
  /// episode start, which is equivalent to zero-padding the window).
  Tensor goal_sum() const {
    Tensor sum = Tensor::zeros({dim_});
    for (const auto& e : entries_) axpy(1.0, e.goal, sum);
    return sum;
  }

  std::vector<std::size_t> member_steps() const {
    std::vector<std::size_t> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.step);
    return out;
  }

 private:
  std::size_t horizon_ = 0;
  std::size_t dim_ = 0;
  std::deque<GoalHistoryEntry> entries_;
};

}  // namespace feudal
