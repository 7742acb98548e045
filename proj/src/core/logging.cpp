#include "sketchforge/core/logging.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

namespace sf {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto existing = spdlog::get("sketchforge");
    if (existing)
      return existing;
    auto l = spdlog::stderr_color_mt("sketchforge");
    l->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    return l;
  }();
  return instance;
}

} // namespace sf
