#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace probshift {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes of the command-line tool.
enum ExitCode : int { exit_ok = 0, exit_error = 1, exit_infeasible = 2, exit_timeout = 3 };

/// Runs the command line `args` (program name excluded). Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace probshift
