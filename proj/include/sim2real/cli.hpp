#pragma once

#include <iosfwd>

namespace sim2real {

// Exit codes of the `run` subcommand; other subcommands use 0 and 1 only.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFatal = 1;
inline constexpr int kExitPartial = 2;

// Entry point behind the `sim2real` binary. Subcommands: run, embed, cmmd,
// eval-seg, eval-det, report.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sim2real
