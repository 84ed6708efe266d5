#pragma once

#include "epsolve/config.hpp"

#include <iosfwd>
#include <string>

namespace epsolve {

inline constexpr const char *kToolName = "epsolve";
inline constexpr const char *kToolVersion = "0.1.0";

struct RunOptions {
  int jobs = 1;
  bool color = false;
};

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitVerificationFailed = 2 };

/// Runs the configured pipeline, writing its artifacts into
/// config.pipeline.output. Prints a one-line summary to `out` and log lines
/// to `log`; errors become error.json plus a JSON record on `log`.
int run(const RunConfig &config, const RunOptions &options, std::ostream &out,
        std::ostream &log);

/// Shortest round-trip text for a double ("nan", "inf" for non-finite).
std::string format_number(double v);

} // namespace epsolve
