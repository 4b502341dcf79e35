#pragma once

#include "mfsim/config.hpp"

#include <iosfwd>

namespace mfsim {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int unexpected = 1;
inline constexpr int config_error = 2;
inline constexpr int diverged = 3;
inline constexpr int solver_failure = 4;
}  // namespace exit_code

/// Runs the configured command, writes the CSV and the metadata sidecar, and
/// returns the process exit code. Diagnostics go to `log`. Nothing is written
/// unless the run completes; validate-model reports failed checks like
/// diverged cells.
[[nodiscard]] int dispatch(const RunConfig& config, std::ostream& log);

}  // namespace mfsim
