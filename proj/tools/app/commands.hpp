#pragma once

#include <exception>
#include <string>

#include "config.hpp"

namespace cbgopt::app {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kNumericalError = 3,
  kExtrapolationError = 4,
};

struct RunOptions {
  std::string out_dir;  // overrides config.output_dir when set
  std::size_t threads = 1;
};

robust::Oracle make_oracle(const OracleConfig& config);

/// Runs one subcommand and writes its files. Errors propagate as exceptions.
void run_command(const std::string& command, const RunConfig& config, const RunOptions& options);

/// Maps an exception to the documented exit code.
int exit_code_for(const std::exception& e);

}  // namespace cbgopt::app
