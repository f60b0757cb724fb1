#include "semidqg/logging.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <mutex>

namespace semidqg::log {

namespace {

std::atomic<Level> g_threshold{Level::INFO};
std::mutex g_mutex;

Level initial_threshold() {
    const char* env = std::getenv("SEMIDQG_LOG");
    if (env == nullptr) return Level::INFO;
    if (std::strcmp(env, "debug") == 0) return Level::DEBUG;
    if (std::strcmp(env, "warn") == 0) return Level::WARN;
    if (std::strcmp(env, "error") == 0) return Level::ERROR;
    return Level::INFO;
}

const char* name(Level lvl) {
    switch (lvl) {
        case Level::DEBUG: return "debug";
        case Level::INFO: return "info";
        case Level::WARN: return "warn";
        case Level::ERROR: return "error";
    }
    return "?";
}

struct Init {
    Init() { g_threshold.store(initial_threshold()); }
} g_init;

}  // namespace

Level threshold() { return g_threshold.load(); }

void set_threshold(Level lvl) { g_threshold.store(lvl); }

void write(Level lvl, const std::string& msg) {
    if (static_cast<int>(lvl) < static_cast<int>(threshold())) return;
    std::lock_guard<std::mutex> lock(g_mutex);
    std::fprintf(stderr, "[semidqg %s] %s\n", name(lvl), msg.c_str());
}

}  // namespace semidqg::log
