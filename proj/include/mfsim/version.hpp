#pragma once

namespace mfsim {

inline constexpr const char* kVersion = "0.1.0";
/// Bumped whenever a CSV layout changes.
inline constexpr int kCsvSchemaVersion = 1;

}  // namespace mfsim
