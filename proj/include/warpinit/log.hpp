// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iostream>
#include <string>

namespace warpinit::log {

inline bool& verbose() {
  static bool v = true;
  return v;
}

inline void warn(const std::string& msg) {
  if (verbose()) std::cerr << "[warn] " << msg << "\n";
}

inline void info(const std::string& msg) {
  if (verbose()) std::cerr << "[info] " << msg << "\n";
}

}  // namespace warpinit::log
