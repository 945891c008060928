#include "driftlab/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace driftlab::log {
namespace {

std::atomic<Level> g_level{Level::Warn};
std::atomic<unsigned long> g_warnings{0};
std::mutex g_sink_mutex;

void emit(Level lvl, std::string_view tag, std::string_view message) {
    if (lvl < g_level.load()) return;
    std::lock_guard lock(g_sink_mutex);
    std::cerr << "[driftlab " << tag << "] " << message << '\n';
}

}  // namespace

void set_level(Level lvl) { g_level.store(lvl); }
Level level() { return g_level.load(); }

void debug(std::string_view message) { emit(Level::Debug, "debug", message); }
void info(std::string_view message) { emit(Level::Info, "info", message); }
void warn(std::string_view message) {
    ++g_warnings;
    emit(Level::Warn, "warn", message);
}
void error(std::string_view message) { emit(Level::Error, "error", message); }

unsigned long warning_count() { return g_warnings.load(); }
void reset_warning_count() { g_warnings.store(0); }

}  // namespace driftlab::log
