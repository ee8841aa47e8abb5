// SPDX-License-Identifier: Apache-2.0
#include "art/log.hpp"

#include <spdlog/spdlog.h>

namespace art::log {

void info(std::string_view msg) { spdlog::info("{}", msg); }
void warn(std::string_view msg) { spdlog::warn("{}", msg); }
void set_quiet(bool quiet) { spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info); }

}  // namespace art::log
