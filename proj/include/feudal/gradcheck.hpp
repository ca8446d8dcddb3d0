#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "feudal/nn.hpp"

namespace feudal {

/// Central finite differences over 64-bit floats.
inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTolerance = 1e-5;

/// |a - f| / max(1, |a|, |f|): relative for meaningful gradients, absolute
/// near zero where difference noise dominates.
double fd_relative_error(double analytic, double fd);

struct GradCheckResult {
  std::string name;
  double worst_rel_err = 0.0;
  std::size_t cases = 0;
  std::size_t coords = 0;
  bool pass = false;
};

/// Compares the registry's accumulated analytic gradients against central
/// finite differences of `loss` over every parameter coordinate. The
/// analytic gradients must already be in place.
double fd_check_params(ParamList& params, const std::function<double()>& loss,
                       double step = kFdStep);

// Per-component suites, `cases` randomized instances each. Names match the
// component they exercise. All use tiny dimensions so every coordinate can
// be checked.
GradCheckResult gradcheck_linear(std::uint64_t seed, std::size_t cases);
GradCheckResult gradcheck_lstm(std::uint64_t seed, std::size_t cases);
GradCheckResult gradcheck_softmax_logprob(std::uint64_t seed,
                                          std::size_t cases);
GradCheckResult gradcheck_cosine(std::uint64_t seed, std::size_t cases);
GradCheckResult gradcheck_value_heads(std::uint64_t seed, std::size_t cases);
GradCheckResult gradcheck_manager_path(std::uint64_t seed, std::size_t cases);
GradCheckResult gradcheck_worker_path(std::uint64_t seed, std::size_t cases);
GradCheckResult gradcheck_full_loss(std::uint64_t seed, std::size_t cases);
GradCheckResult gradcheck_non_feudal(std::uint64_t seed, std::size_t cases);
GradCheckResult gradcheck_baseline(std::uint64_t seed, std::size_t cases);

/// Runs every suite plus the transition-policy-gradient equivalence check
/// (reported as a pseudo-suite whose "error" is the max deviation against a
/// 1e-10 bound).
std::vector<GradCheckResult> run_all_gradchecks(std::uint64_t seed,
                                                std::size_t cases = 100);

}  // namespace feudal
