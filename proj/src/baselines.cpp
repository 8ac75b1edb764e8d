// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#include "warpinit/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "warpinit/errors.hpp"

namespace warpinit {

DepthAlignment fit_linear_scaling(const std::vector<double>& estimated,
                                  const std::vector<double>& reference) {
  if (estimated.size() != reference.size()) throw_invalid("depth lists differ in length");
  if (estimated.size() < 2) throw_invalid("linear scaling needs at least 2 samples");
  for (std::size_t i = 0; i < estimated.size(); ++i)
    if (!std::isfinite(estimated[i]) || !std::isfinite(reference[i]))
      throw_invalid("non-finite depth sample");
  const auto [min_it, max_it] = std::minmax_element(estimated.begin(), estimated.end());
  if (*min_it == *max_it) throw_numeric("rank-deficient linear scaling: all estimated depths equal");

  const double n = static_cast<double>(estimated.size());
  double mean_d = 0.0;
  double mean_r = 0.0;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    mean_d += estimated[i];
    mean_r += reference[i];
  }
  mean_d /= n;
  mean_r /= n;

  double var = 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    var += (estimated[i] - mean_d) * (estimated[i] - mean_d);
    cov += (estimated[i] - mean_d) * (reference[i] - mean_r);
  }
  if (var <= 0.0) throw_numeric("rank-deficient linear scaling: zero depth variance");

  DepthAlignment alignment;
  alignment.scale = cov / var;
  alignment.offset = mean_r - alignment.scale * mean_d;

  double sq_sum = 0.0;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    const double res = alignment.scale * estimated[i] + alignment.offset - reference[i];
    sq_sum += res * res;
  }
  alignment.rms = std::sqrt(sq_sum / n);
  return alignment;
}

DepthMap apply_linear_scaling(const DepthAlignment& alignment, const DepthMap& depth) {
  if (!std::isfinite(alignment.scale) || !std::isfinite(alignment.offset))
    throw_invalid("non-finite alignment");
  DepthMap out = depth;
  for (auto& d : out.values) {
    if (!depth_valid(d)) continue;
    const double v = alignment.scale * d + alignment.offset;
    d = depth_valid(v) ? v : 0.0;
  }
  return out;
}

}  // namespace warpinit
