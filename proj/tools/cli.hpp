#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace bnn::cli {

// Process exit codes. Stable; documented in the README.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kIo = 3,
  kValidation = 4,
  kCalibration = 5,
  kCheckFailed = 6,
};

// Runs the command line `args` (args[0] is the program name). Reports go to
// `out`; the resolved configuration, progress and errors go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bnn::cli
