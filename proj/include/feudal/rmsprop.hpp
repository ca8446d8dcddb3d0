#pragma once

#include <vector>

#include "feudal/nn.hpp"
#include "feudal/tensor.hpp"

namespace feudal {

/// RMSProp with one squared-gradient accumulator per parameter tensor.
///   acc <- decay * acc + (1 - decay) * g^2
///   p   <- p - lr * g / sqrt(acc + eps)
/// Accumulators stay elementwise nonnegative by construction.
class RmsProp {
 public:
  RmsProp(double learning_rate, double decay, double epsilon)
      : learning_rate_(learning_rate), decay_(decay), epsilon_(epsilon) {}

  /// Lazily sizes accumulators to the registry on first use. The registry
  /// order must stay fixed across calls.
  void step(ParamList& params) { step(params, learning_rate_); }
  void step(ParamList& params, double lr);

  double learning_rate() const { return learning_rate_; }
  double decay() const { return decay_; }
  double epsilon() const { return epsilon_; }
  const std::vector<Tensor>& accumulators() const { return acc_; }

 private:
  double learning_rate_, decay_, epsilon_;
  std::vector<Tensor> acc_;
};

}  // namespace feudal
