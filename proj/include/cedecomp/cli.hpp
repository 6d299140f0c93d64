#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cedecomp {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitParse = 1,       // parse or I/O failure, bad usage
  kExitValidation = 2,  // record/manifest invariant breach
  kExitIdentity = 3,    // decomposition residual outside tolerance
};

// Runs the command line `args` (args[0] is the program name). Data goes to
// `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cedecomp
