#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace dgnerf::log {

// Verbosity from DGNERF_LOG: quiet | info (default) | debug
inline int level() {
  static int lv = [] {
    const char* e = std::getenv("DGNERF_LOG");
    if (!e) return 1;
    if (std::strcmp(e, "quiet") == 0) return 0;
    if (std::strcmp(e, "debug") == 0) return 2;
    return 1;
  }();
  return lv;
}

template <typename... Args>
void info(const char* fmt, Args... args) {
  if (level() >= 1) {
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
  }
}

template <typename... Args>
void warn(const char* fmt, Args... args) {
  if (level() >= 1) {
    std::fprintf(stderr, "warning: ");
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
  }
}

template <typename... Args>
void debug(const char* fmt, Args... args) {
  if (level() >= 2) {
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
  }
}

}  // namespace dgnerf::log
