#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace sf {

/// Shared library logger ("sketchforge"), created on first use.
std::shared_ptr<spdlog::logger> logger();

} // namespace sf
