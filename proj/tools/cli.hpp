#pragma once

namespace kfmc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

/// Entry point of the `kfmc` command; returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace kfmc::cli
