// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace warpinit {

// mt19937_64 output is fully specified by the standard; the helpers below
// avoid std::uniform_*_distribution, whose mapping is implementation-defined,
// so seeded results are byte-identical across toolchains.

// Uniform draw from [0, n) by rejection sampling.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / n * n;
  std::uint64_t r = rng();
  while (r >= limit) r = rng();
  return r % n;
}

// Uniform double in [0, 1) with 53 random mantissa bits.
inline double unit_real(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform double in [lo, hi).
inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * unit_real(rng);
}

}  // namespace warpinit
