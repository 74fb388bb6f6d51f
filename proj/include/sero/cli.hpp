#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sero {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;

/// Entry point behind the `sero` tool. `args` excludes the program name.
/// Subcommands: train, retrain, eval, calibrate, plot.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sero
