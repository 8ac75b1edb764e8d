// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "warpinit/types.hpp"

namespace warpinit {

// 8-bit RGB image, row-major, same pixel convention as the geometry module.
struct Image {
  ViewId view = 0;
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  const Rgb& at(int i, int j) const { return pixels[static_cast<std::size_t>(j) * width + i]; }
  Rgb& at(int i, int j) { return pixels[static_cast<std::size_t>(j) * width + i]; }
};

}  // namespace warpinit
