#pragma once

#include <spdlog/spdlog.h>

namespace dejavu {

// Process-wide logger on stderr. Level comes from DEJAVU_LOG_LEVEL
// (trace|debug|info|warn|error|off), default info.
spdlog::logger& logger();

}  // namespace dejavu
