#pragma once

#include <iosfwd>

namespace demo {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;      // bad arguments, config or input files
inline constexpr int kExitTransport = 2;  // peer loss, timeout, step mismatch
inline constexpr int kExitFailure = 3;    // anything else

// Entry point of the `demo` tool; `main` forwards to it.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace demo
