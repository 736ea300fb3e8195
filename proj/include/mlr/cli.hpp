#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mlr::cli {

enum ExitCode : int { ok = 0, invalid_input = 1, numerical_failure = 2 };

/// Runs one command line. `args` excludes the program name. Diagnostics go to `err`,
/// short progress summaries to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace mlr::cli
