#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace v2v::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kInvalidArgument = 3,
  kIo = 4,
  kNumeric = 5,
  kCheckFailed = 6,
};

/// Runs one subcommand. args[0] is the program name. Failures print a single
/// JSON line {"error": kind, "message": ..., "exit_code": n} to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace v2v::cli
