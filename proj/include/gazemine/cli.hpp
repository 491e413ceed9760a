#pragma once

#include <ostream>

namespace gazemine {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitPrecondition = 3;

/// Entry point of the `gazemine` command. Progress goes to `out`; failures
/// print one line to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gazemine
