#include "feudal/rmsprop.hpp"

#include <cmath>
#include <stdexcept>

namespace feudal {

void RmsProp::step(ParamList& params, double lr) {
  if (acc_.empty()) {
    acc_.reserve(params.size());
    for (const auto& p : params) acc_.push_back(Tensor::zeros(p.value->shape));
  }
  if (acc_.size() != params.size()) {
    throw std::logic_error("RmsProp::step: registry size changed");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& value = *params[i].value;
    const Tensor& grad = *params[i].grad;
    Tensor& acc = acc_[i];
    if (value.size() != grad.size() || value.size() != acc.size()) {
      throw std::logic_error("RmsProp::step: shape mismatch in registry");
    }
    for (std::size_t j = 0; j < value.size(); ++j) {
      double g = grad.data[j];
      acc.data[j] = decay_ * acc.data[j] + (1.0 - decay_) * g * g;
      value.data[j] -= lr * g / std::sqrt(acc.data[j] + epsilon_);
    }
  }
}

}  // namespace feudal
