#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "feudal/agent_config.hpp"
#include "feudal/baseline.hpp"
#include "feudal/envs.hpp"
#include "feudal/training.hpp"

namespace feudal {

/// A full run description: which agent, which environment, how to train,
/// where to write. Parsed from an INI-style key=value file with [agent],
/// [env], [train] and [run] sections ('#' starts a comment).
struct RunConfig {
  std::string agent_type = "fun";  // "fun" | "lstm" | "dlstm"
  AgentConfig agent;
  BaselineConfig baseline;
  EnvSpec env;
  TrainConfig train;
  std::string out_dir = "runs/out";
  std::vector<std::uint64_t> seeds{1};

  bool is_fun() const { return agent_type == "fun"; }
};

/// Parses config text; `origin` names the source in diagnostics. Unknown
/// sections or keys, malformed values, and missing required keys all throw
/// std::runtime_error with a file:line reference.
RunConfig parse_run_config(const std::string& text, const std::string& origin);

RunConfig load_run_config(const std::string& path);

/// "1,2,3" -> {1,2,3}; rejects empties and non-numeric entries.
std::vector<std::uint64_t> parse_seed_list(const std::string& csv);

}  // namespace feudal
