// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "warpinit/geometry.hpp"

namespace warpinit {

// Global scale + offset depth alignment, the linear-scaling baseline the
// spline warp is compared against.
struct DepthAlignment {
  double scale = 1.0;
  double offset = 0.0;
  double rms = 0.0;  // root mean squared residual of the fit
};

// Closed-form least squares for sum (s * est + b - ref)^2. Lists must have
// equal length >= 2; all-equal estimated depths are rank-deficient.
DepthAlignment fit_linear_scaling(const std::vector<double>& estimated,
                                  const std::vector<double>& reference);

// Maps every valid depth through s * d + b; non-positive results become
// invalid entries.
DepthMap apply_linear_scaling(const DepthAlignment& alignment, const DepthMap& depth);

}  // namespace warpinit
