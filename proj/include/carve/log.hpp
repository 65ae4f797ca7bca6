#pragma once

#include <string_view>

namespace carve {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

// Verbosity comes from the CARVE_LOG environment variable (error|warn|info|debug); default warn.
LogLevel log_level();
void set_log_level(LogLevel level);

void log_message(LogLevel level, std::string_view msg);
inline void log_warn(std::string_view msg) { log_message(LogLevel::warn, msg); }
inline void log_info(std::string_view msg) { log_message(LogLevel::info, msg); }
inline void log_debug(std::string_view msg) { log_message(LogLevel::debug, msg); }

}  // namespace carve
