#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sfim::cli {

// Exit codes: a stable contract for scripts.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;  // unexpected failure outside the taxonomy
inline constexpr int kExitUsage = 2;     // bad flags or configuration
inline constexpr int kExitNumeric = 3;   // non-finite values, failed invariant suites
inline constexpr int kExitIo = 4;        // unreadable or unwritable files

// Runs one command (args exclude the program name). Progress and results go
// to `out`; failures print one "error: ..." line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace sfim::cli
