#pragma once

#include <cstdio>
#include <string>

namespace semidqg::log {

enum class Level { DEBUG = 0, INFO = 1, WARN = 2, ERROR = 3 };

Level threshold();
void set_threshold(Level lvl);

void write(Level lvl, const std::string& msg);

inline void debug(const std::string& msg) { write(Level::DEBUG, msg); }
inline void info(const std::string& msg) { write(Level::INFO, msg); }
inline void warn(const std::string& msg) { write(Level::WARN, msg); }
inline void error(const std::string& msg) { write(Level::ERROR, msg); }

}  // namespace semidqg::log
