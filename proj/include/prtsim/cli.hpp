#pragma once

namespace prt {

// Exit codes of the prtsim tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;       // unreadable or invalid scenario/flags
inline constexpr int kExitRuntime = 3;     // engine failed an internal invariant
inline constexpr int kExitNotSaturated = 4;
inline constexpr int kExitDivergence = 5;  // engines disagree beyond tolerance

/// Full command line entry point, separated from main() for testability.
int cli_main(int argc, const char* const* argv);

}  // namespace prt
