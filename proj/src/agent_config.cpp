#include "feudal/agent_config.hpp"

namespace feudal {

std::string to_string(FunMode mode) {
  switch (mode) {
    case FunMode::full_fun: return "full_fun";
    case FunMode::non_feudal: return "non_feudal";
    case FunMode::absolute_goals: return "absolute_goals";
  }
  return "?";
}

FunMode fun_mode_from_string(const std::string& s) {
  if (s == "full_fun") return FunMode::full_fun;
  if (s == "non_feudal") return FunMode::non_feudal;
  if (s == "absolute_goals") return FunMode::absolute_goals;
  throw std::invalid_argument("unknown agent mode: " + s);
}

void AgentConfig::normalize() {
  if (no_dilation) r = 1;
}

void AgentConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("AgentConfig: ") + msg);
  };
  require(obs_dim > 0, "obs_dim must be positive");
  require(num_actions > 1, "need at least two actions");
  require(k < d, "goal embedding must satisfy k < d");
  require(c >= 1, "horizon c must be >= 1");
  require(r >= 1, "dilation radius r must be >= 1");
  require(!no_dilation || r == 1, "no_dilation requires r == 1");
  require(percept_hidden > 0 && worker_hidden > 0 && manager_hidden > 0,
          "hidden sizes must be positive");
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  require(epsilon_goal >= 0.0 && epsilon_goal <= 1.0,
          "epsilon_goal must lie in [0, 1]");
  require(gamma_worker >= 0.0 && gamma_worker <= 1.0, "gamma_worker in [0,1]");
  require(gamma_manager >= 0.0 && gamma_manager <= 1.0,
          "gamma_manager in [0,1]");
}

}  // namespace feudal
