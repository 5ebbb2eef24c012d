#pragma once

namespace eegmtl {

// Exit codes, one class per failure mode so scripts can branch on them.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;
inline constexpr int kExitCheckFailed = 5;

/// Parses and runs one subcommand (gen, train, eval, sweep, gradcheck, plot).
/// Returns a process exit code; never throws.
int run_cli(int argc, const char* const* argv);

} // namespace eegmtl
