#include "carve/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace carve {

namespace {

LogLevel parse_env() {
    const char* env = std::getenv("CARVE_LOG");
    if (env == nullptr) return LogLevel::warn;
    const std::string v(env);
    if (v == "error") return LogLevel::error;
    if (v == "info") return LogLevel::info;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::warn;
}

std::atomic<int>& level_storage() {
    static std::atomic<int> level{static_cast<int>(parse_env())};
    return level;
}

constexpr const char* kNames[] = {"error", "warn", "info", "debug"};

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_storage().load()); }

void set_log_level(LogLevel level) { level_storage().store(static_cast<int>(level)); }

void log_message(LogLevel level, std::string_view msg) {
    if (static_cast<int>(level) > level_storage().load()) return;
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cerr << "[carve " << kNames[static_cast<int>(level)] << "] " << msg << '\n';
}

}  // namespace carve
