#pragma once

#include <string_view>

namespace driftlab::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

void set_level(Level level);
[[nodiscard]] Level level();

void debug(std::string_view message);
void info(std::string_view message);
void warn(std::string_view message);
void error(std::string_view message);

/// Number of warnings emitted since start (or since the last reset). Used by
/// tests to observe warn-and-continue paths.
[[nodiscard]] unsigned long warning_count();
void reset_warning_count();

}  // namespace driftlab::log
