#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vrel {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2 };

/// Runs the command-line driver on `args` (without the program name). Returns 0 on success,
/// 1 on a usage error and 2 on a data error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vrel
