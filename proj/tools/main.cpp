#include <iostream>

#include <CLI11.hpp>

#include "app/commands.hpp"
#include "cbgopt/errors.hpp"

int main(int argc, char** argv) {
  using namespace cbgopt::app;
  CLI::App cli{"Surrogate-based design, robustness analysis and bias-field tools for CBG cavities"};
  cli.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  RunOptions options;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"optimize", "Bayesian optimization of the design target"},
      {"robustness", "Monte Carlo robustness report under fabrication tolerances"},
      {"robust-optimize", "optimize the mean of the fabrication distribution"},
      {"verify", "compare surrogate predictions with the oracle on fresh samples"},
      {"capacitor", "electrostatic bias sweep and field map"},
      {"toy-eval", "evaluate the synthetic oracle at given designs"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = cli.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--out", options.out_dir, "output directory (overrides output_dir)");
    sub->add_option("--threads", options.threads, "worker threads for sample evaluation")
        ->check(CLI::PositiveNumber);
  }

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  const std::string command = cli.get_subcommands().front()->get_name();
  try {
    const auto config = load_config(config_path, command, seed);
    run_command(command, config, options);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kOk;
}
