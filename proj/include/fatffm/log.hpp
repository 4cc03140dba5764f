#pragma once

#include <cstdlib>
#include <iostream>
#include <string_view>

namespace fatffm {

/// Progress logging to stderr, silenced with FATFFM_LOG=quiet.
inline bool log_enabled() {
  static const bool enabled = [] {
    const char* level = std::getenv("FATFFM_LOG");
    return !(level && std::string_view(level) == "quiet");
  }();
  return enabled;
}

template <typename... Args>
void log_info(const Args&... args) {
  if (!log_enabled()) return;
  (std::cerr << ... << args) << '\n';
}

}  // namespace fatffm
