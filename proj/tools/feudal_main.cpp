#include <CLI11.hpp>
#include <cstdio>
#include <exception>

#include "feudal/cli.hpp"
#include "feudal/runconfig.hpp"

int main(int argc, char** argv) {
  CLI::App app{"feudal: hierarchical Manager/Worker agent on toy tasks"};
  app.require_subcommand(1);

  std::string config_path;
  std::string seed_list;
  std::string out_dir;
  std::string mode;
  std::string checkpoint_path;
  std::size_t episodes = 100;
  std::uint64_t seed = 1;
  bool greedy = false;

  auto* train = app.add_subcommand("train", "train per the config file");
  train->add_option("--config", config_path, "run config path")->required();
  train->add_option("--seed", seed_list, "comma-separated seed list override");
  train->add_option("--out", out_dir, "output directory override");

  auto* eval = app.add_subcommand("eval", "roll out a checkpoint");
  eval->add_option("--config", config_path, "run config path")->required();
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint path")
      ->required();
  eval->add_option("--episodes", episodes, "episodes to run");
  eval->add_option("--seed", seed, "evaluation seed");
  eval->add_flag("--greedy", greedy, "argmax actions instead of sampling");

  auto* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient suites");
  gradcheck->add_option("--seed", seed, "suite seed");

  auto* ablate = app.add_subcommand("ablate", "run one ablation mode");
  ablate->add_option("--config", config_path, "run config path")->required();
  ablate->add_option("--mode", mode,
                     "non_feudal | absolute_goals | c1 | no_dilation | "
                     "alpha_sweep")
      ->required();
  ablate->add_option("--seed", seed_list, "comma-separated seed list override");
  ablate->add_option("--out", out_dir, "output directory override");

  CLI11_PARSE(app, argc, argv);

  try {
    feudal::CliOverrides overrides;
    if (!seed_list.empty()) {
      overrides.seeds = feudal::parse_seed_list(seed_list);
    }
    if (!out_dir.empty()) overrides.out_dir = out_dir;

    if (train->parsed()) return feudal::cmd_train(config_path, overrides);
    if (eval->parsed()) {
      feudal::EvalOptions options;
      options.config_path = config_path;
      options.checkpoint_path = checkpoint_path;
      options.episodes = episodes;
      options.seed = seed;
      options.greedy = greedy;
      return feudal::cmd_eval(options);
    }
    if (gradcheck->parsed()) return feudal::cmd_gradcheck(seed);
    if (ablate->parsed()) {
      return feudal::cmd_ablate(config_path, mode, overrides);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
