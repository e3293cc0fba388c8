#include "dejavu/log.h"

#include <cstdlib>

#include <spdlog/sinks/stdout_sinks.h>

namespace dejavu {

spdlog::logger& logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_logger_mt("dejavu");
    l->set_pattern("[%Y-%m-%d %H:%M:%S.%e] [%l] %v");
    const char* level = std::getenv("DEJAVU_LOG_LEVEL");
    l->set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
    return l;
  }();
  return *instance;
}

}  // namespace dejavu
