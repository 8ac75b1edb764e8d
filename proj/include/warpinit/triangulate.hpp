// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <vector>

#include "warpinit/geometry.hpp"
#include "warpinit/tracks.hpp"
#include "warpinit/types.hpp"

namespace warpinit {

using CameraLookup = std::map<ViewId, Camera>;

// A triangulated, refinement-verified 3D point: the desired control point of
// the downstream deformation.
struct ControlPoint {
  Vec3 position = Vec3::Zero();
  std::size_t track_index = 0;
  double mean_reproj_error = 0.0;  // pixels, averaged over observing views
  int view_count = 0;
};

struct TriangulationStats {
  std::size_t accepted = 0;
  std::size_t rejected_degenerate = 0;  // DLT failures: baseline or point at infinity
  std::size_t rejected_cheirality = 0;
  std::size_t rejected_reprojection = 0;
};

struct TriangulationResult {
  std::vector<ControlPoint> controls;
  TriangulationStats stats;
};

// Homogeneous DLT estimate from the stacked cross-product constraints, each
// observation's pixel normalized by its image diagonal. Throws
// ErrorKind::numeric for a coincident-center baseline or a solution at
// infinity (|w| < 1e-12).
Vec3 triangulate_dlt(const Track& track, const CameraLookup& cameras);

// Levenberg-Marquardt on the total squared reprojection error. Never returns
// a point with higher cost than the start; stops on step norm below
// 1e-10 * (1 + |X|), cost decrease below 1e-12, or 50 iterations. A start
// with infinite cost (behind a camera) is returned unchanged.
Vec3 refine_reprojection(const Vec3& x0, const Track& track, const CameraLookup& cameras);

// Sum over observations of |pi(P X) - p|^2, in squared pixels. Infinite when
// X lies on a camera's principal plane.
double reprojection_cost(const Vec3& x, const Track& track, const CameraLookup& cameras);

// Analytic Jacobian of pi(K(RX + t)) with respect to X.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& camera, const Vec3& x);

// DLT + refinement per track, then cheirality and mean-reprojection-error
// filtering. Output order follows track order regardless of thread count.
TriangulationResult triangulate_all(const std::vector<Track>& tracks, const CameraLookup& cameras,
                                    double max_reproj_error = 2.0);
TriangulationResult triangulate_all_serial(const std::vector<Track>& tracks, const CameraLookup& cameras,
                                           double max_reproj_error = 2.0);

}  // namespace warpinit
