#pragma once

#include <string>
#include <vector>

namespace lmue::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kInputError = 2,
    kUndefinedMetric = 3,
    kNumericError = 4,
};

// Runs the command line `args` (args[0] is the program name) and returns
// the process exit code. Errors are reported on stderr.
int run(const std::vector<std::string> & args);

}  // namespace lmue::cli
