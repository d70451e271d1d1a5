#pragma once

#include <iosfwd>

namespace hrssr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Entry point of the `hrssr` tool; output and diagnostics go to the given
// streams so the dispatcher can be exercised in-process.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hrssr::cli
