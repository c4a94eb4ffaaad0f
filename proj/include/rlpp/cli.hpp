#pragma once

#include <ostream>

namespace rlpp::cli {

enum ExitCode : int {
  kOk = 0,
  kParseFailure = 2,
  kValidationFailure = 3,
  kRuntimeFailure = 4,
};

/// Entry point of the rlpp tool. Never throws; errors map to an ExitCode.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rlpp::cli
