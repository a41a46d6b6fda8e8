#pragma once

#include <iosfwd>

namespace ocsvm_cpd::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kDataError = 1;
inline constexpr int kUsageError = 2;  // also calibration / convergence failure

/// Runs the command line in-process. argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ocsvm_cpd::cli
