// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "warpinit/geometry.hpp"
#include "warpinit/tracks.hpp"
#include "warpinit/triangulate.hpp"
#include "warpinit/types.hpp"

namespace warpinit {

// One correspondence driving the warp: a backprojected estimate and the
// multi-view point it should move onto.
struct ControlPair {
  Vec3 source = Vec3::Zero();
  Vec3 target = Vec3::Zero();
  Vec2 pixel = Vec2::Zero();  // query-view pixel the pair came from
};

// 3D thin-plate spline x -> t + A x + sum_i W_i U(|x - c_i|), kernel U(r) = r.
struct TpsModel {
  Vec3 t = Vec3::Zero();
  Mat3 A = Mat3::Identity();
  std::vector<Vec3> centers;               // deduplicated source control points
  Eigen::MatrixXd W;                       // M x 3, row i weights center i
  double lambda = 0.0;

  bool is_identity() const { return centers.empty(); }
};

// Solves the (M+4)x(M+4) interpolation system
//   [ K + lambda I   P ] [ W ]   [ targets ]
//   [ P^T            0 ] [ a ] = [ 0       ],
// K_ij = |c_i - c_j|, P_i = [1, c_i^T], for all three output dimensions at
// once. lambda = 0 interpolates exactly. Sources closer than 1e-9 are merged
// by averaging their targets. Rank deficiency triggers one retry with
// lambda = max(lambda, 1e-8 * fallback_scale), then a numeric error; fewer
// than 4 merged pairs is an invalid-input error.
TpsModel fit_tps(const std::vector<ControlPair>& pairs, double lambda, double fallback_scale = 1.0);

Vec3 apply_tps(const TpsModel& model, const Vec3& x);

// Warps every valid pointmap entry; the validity mask and invalid entries
// pass through untouched.
Pointmap deform_pointmap(const TpsModel& model, const Pointmap& pointmap);
Pointmap deform_pointmap_serial(const TpsModel& model, const Pointmap& pointmap);

// For each control point whose track observes `view`, pairs the pointmap
// value at the track's pixel (bilinear over valid neighbors) with the control
// position. Pixels landing on wholly invalid depth are skipped and counted in
// *skipped_invalid. Throws invalid-input when no pair survives.
std::vector<ControlPair> build_control_pairs(ViewId view, const std::vector<Track>& tracks,
                                             const std::vector<ControlPoint>& controls,
                                             const Pointmap& pointmap,
                                             std::size_t* skipped_invalid = nullptr);

}  // namespace warpinit
