#include <CLI11.hpp>

#include <iostream>

#include "ben/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace ben::cli;
  CLI::App app{"ben: Bayesian exploration network experiments"};
  app.require_subcommand(1);

  Invocation inv;
  std::uint64_t seed = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("config", inv.config_path, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--preset", inv.preset, "preset name (overrides experiment.preset)");
    sub->add_option("--seed", seed, "run this single seed instead of the configured list");
    sub->add_option("--out", inv.out, "output directory (else experiment.out, BEN_OUT_DIR, ./runs)");
  };
  auto* run = app.add_subcommand("run", "train BEN per seed and write metrics");
  common(run);
  auto* oracle = app.add_subcommand("oracle", "print the tiger reference values");
  common(oracle);
  auto* ablate = app.add_subcommand("ablate", "sweep one axis, one metrics file per setting");
  common(ablate);
  ablate->add_option("--axis", inv.axis, "aleatoric_layers | pretrain_steps | contextual")
      ->required()
      ->check(CLI::IsMember({"aleatoric_layers", "pretrain_steps", "contextual"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }
  for (auto* sub : {run, oracle, ablate})
    if (sub->parsed() && sub->count("--seed")) inv.seed = seed;

  if (run->parsed()) return run_command(inv, std::cout, std::cerr);
  if (oracle->parsed()) return oracle_command(inv, std::cout, std::cerr);
  return ablate_command(inv, std::cout, std::cerr);
}
