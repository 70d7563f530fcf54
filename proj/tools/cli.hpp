#pragma once

#include <iosfwd>

namespace snapdiag::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitUsage = 64;

/// Entry point for `snapdiag <ingest|validate|serve|query|evaluate|synth>`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace snapdiag::cli
