#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mfl/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for mean-field Langevin flows on tori", "mfl-lab"};
  std::string command, config, out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("command", command, "spectrum | simulate | constants | check | sweep")
      ->required()
      ->check(CLI::IsMember({"spectrum", "simulate", "constants", "check", "sweep"}));
  app.add_option("--config", config, "experiment config (JSON)")->required();
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--seed", seed, "RNG seed, overrides the config");
  app.add_flag("--quiet", quiet, "suppress progress output");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : mfl::cli::exit_config;
  }
  return mfl::cli::run(command, config, out, seed, quiet);
}
