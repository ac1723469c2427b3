#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gopo::cli {

enum ExitCode : int { kOk = 0, kInvalidInput = 1, kRuntimeFailure = 2 };

/// Runs the gopo command line with `args` (program name excluded).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Applies GOPO_LOG_LEVEL (error, info or debug) to the default logger.
void configure_logging(std::ostream& err);

}  // namespace gopo::cli
