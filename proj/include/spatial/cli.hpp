#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spatial {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point behind the spatialbench binary. `args` excludes the program
/// name. Failures print "error: <ErrorCode>: <message>" on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spatial
