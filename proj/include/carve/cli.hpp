#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace carve {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;      // verify found a failing invariant, or a runtime error
inline constexpr int kExitConfig = 2;       // bad flags, unreadable or invalid config
inline constexpr int kExitUnderflow = 3;    // selection probability below the representable range

// Entry point for `carve <screen|pivot|ci|simulate|verify> [flags]`; args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace carve
