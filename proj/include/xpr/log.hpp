#pragma once

#include <cstdlib>
#include <cstring>

// Log verbosity from the XPR_LOG environment variable:
// quiet (0), info (1, default), debug (2).

namespace xpr {

inline int log_level() {
  static const int level = [] {
    const char* env = std::getenv("XPR_LOG");
    if (!env) return 1;
    if (std::strcmp(env, "quiet") == 0) return 0;
    if (std::strcmp(env, "debug") == 0) return 2;
    return 1;
  }();
  return level;
}

}  // namespace xpr
