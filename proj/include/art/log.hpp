// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

namespace art::log {

void info(std::string_view msg);
void warn(std::string_view msg);
// Silences info-level output (tests, quiet CLI runs).
void set_quiet(bool quiet);

}  // namespace art::log
