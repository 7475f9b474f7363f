#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rrmar {

/// Exit statuses of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;

/// Runs `rrmar <command> [options]`; args[0] is the program name.
/// Commands: simulate, fit, select, decompose, mc.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rrmar
