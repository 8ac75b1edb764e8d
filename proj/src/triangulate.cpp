// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#include "warpinit/triangulate.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "warpinit/errors.hpp"

namespace warpinit {

namespace {

constexpr double kBehindCameraEps = 1e-12;
constexpr double kInfinityTol = 1e-12;     // on the unit homogeneous solution
constexpr double kStepTolScale = 1e-10;    // relative LM step termination
constexpr double kCostDecreaseTol = 1e-12;
constexpr int kMaxLmIterations = 50;

const Camera& camera_for(const CameraLookup& cameras, ViewId view) {
  auto it = cameras.find(view);
  if (it == cameras.end())
    throw_invalid("track observes view " + std::to_string(view) + " with no camera");
  return it->second;
}

// Residual stack r and Jacobian J of the pixel reprojection errors. Returns
// an infinite cost when any observation projects from z <= 0 territory.
double residuals_and_jacobian(const Vec3& x, const Track& track, const CameraLookup& cameras,
                              Eigen::VectorXd* r, Eigen::MatrixXd* jac) {
  const auto n = static_cast<Eigen::Index>(track.observations.size());
  if (r != nullptr) r->resize(2 * n);
  if (jac != nullptr) jac->resize(2 * n, 3);
  double cost = 0.0;
  Eigen::Index row = 0;
  for (const auto& [view, pixel] : track.observations) {
    const Camera& cam = camera_for(cameras, view);
    const Vec3 h = cam.K * (cam.R * x + cam.t);
    if (!(h.z() > kBehindCameraEps) || !h.allFinite())
      return std::numeric_limits<double>::infinity();
    const Vec2 res(h.x() / h.z() - pixel.x(), h.y() / h.z() - pixel.y());
    cost += res.squaredNorm();
    if (r != nullptr) r->segment<2>(row) = res;
    if (jac != nullptr) {
      Eigen::Matrix<double, 2, 3> d_pi;
      const double inv_z = 1.0 / h.z();
      d_pi << inv_z, 0.0, -h.x() * inv_z * inv_z, 0.0, inv_z, -h.y() * inv_z * inv_z;
      jac->middleRows<2>(row) = d_pi * (cam.K * cam.R);
    }
    row += 2;
  }
  return cost;
}

struct TrackOutcome {
  bool accepted = false;
  bool degenerate = false;
  bool behind_camera = false;
  ControlPoint control;
};

// Full treatment of one track; shared by the parallel and serial drivers so
// both produce bit-identical points.
TrackOutcome process_track(const Track& track, std::size_t track_index, const CameraLookup& cameras,
                           double max_reproj_error) {
  TrackOutcome out;
  Vec3 x;
  try {
    x = triangulate_dlt(track, cameras);
    x = refine_reprojection(x, track, cameras);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::numeric) throw;
    out.degenerate = true;
    return out;
  }

  double err_sum = 0.0;
  for (const auto& [view, pixel] : track.observations) {
    const Camera& cam = camera_for(cameras, view);
    if (cam.depth_of(x) <= kBehindCameraEps) {
      out.behind_camera = true;
      return out;
    }
    const Vec3 h = cam.K * (cam.R * x + cam.t);
    err_sum += (Vec2(h.x() / h.z(), h.y() / h.z()) - pixel).norm();
  }
  const double mean_err = err_sum / static_cast<double>(track.observations.size());
  if (!(mean_err <= max_reproj_error)) return out;

  out.accepted = true;
  out.control.position = x;
  out.control.track_index = track_index;
  out.control.mean_reproj_error = mean_err;
  out.control.view_count = static_cast<int>(track.observations.size());
  return out;
}

TriangulationResult collect(const std::vector<TrackOutcome>& outcomes) {
  TriangulationResult result;
  for (const auto& out : outcomes) {
    if (out.accepted) {
      result.controls.push_back(out.control);
      ++result.stats.accepted;
    } else if (out.degenerate) {
      ++result.stats.rejected_degenerate;
    } else if (out.behind_camera) {
      ++result.stats.rejected_cheirality;
    } else {
      ++result.stats.rejected_reprojection;
    }
  }
  return result;
}

void check_cameras_present(const std::vector<Track>& tracks, const CameraLookup& cameras) {
  for (const auto& track : tracks)
    for (const auto& [view, pixel] : track.observations) camera_for(cameras, view);
}

}  // namespace

Vec3 triangulate_dlt(const Track& track, const CameraLookup& cameras) {
  if (track.observations.size() < 2) throw_invalid("triangulation needs at least two observations");

  double max_center_norm = 0.0;
  double max_baseline = 0.0;
  std::vector<Vec3> centers;
  centers.reserve(track.observations.size());
  for (const auto& [view, pixel] : track.observations) {
    centers.push_back(camera_for(cameras, view).center());
    max_center_norm = std::max(max_center_norm, centers.back().norm());
  }
  for (std::size_t i = 1; i < centers.size(); ++i)
    max_baseline = std::max(max_baseline, (centers[i] - centers[0]).norm());
  if (max_baseline <= 1e-12 * (1.0 + max_center_norm))
    throw_numeric("degenerate baseline: coincident camera centers");

  Eigen::MatrixXd a(2 * track.observations.size(), 4);
  Eigen::Index row = 0;
  for (const auto& [view, pixel] : track.observations) {
    const Camera& cam = camera_for(cameras, view);
    const double inv_d = 1.0 / cam.image_diagonal();
    const Mat34 p = cam.projection_matrix();
    // Rows of p~ x (P X) = 0 for the conditioned pixel and projection.
    a.row(row++) = pixel.x() * inv_d * p.row(2) - inv_d * p.row(0);
    a.row(row++) = pixel.y() * inv_d * p.row(2) - inv_d * p.row(1);
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d xh = svd.matrixV().col(3);
  if (std::abs(xh(3)) < kInfinityTol) throw_numeric("triangulated point at infinity");
  return xh.head<3>() / xh(3);
}

double reprojection_cost(const Vec3& x, const Track& track, const CameraLookup& cameras) {
  return residuals_and_jacobian(x, track, cameras, nullptr, nullptr);
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& camera, const Vec3& x) {
  const Vec3 h = camera.K * (camera.R * x + camera.t);
  if (!(std::abs(h.z()) > kBehindCameraEps)) throw_numeric("projection Jacobian on principal plane");
  Eigen::Matrix<double, 2, 3> d_pi;
  const double inv_z = 1.0 / h.z();
  d_pi << inv_z, 0.0, -h.x() * inv_z * inv_z, 0.0, inv_z, -h.y() * inv_z * inv_z;
  return d_pi * (camera.K * camera.R);
}

Vec3 refine_reprojection(const Vec3& x0, const Track& track, const CameraLookup& cameras) {
  if (track.observations.empty()) throw_invalid("refinement needs observations");

  Vec3 x = x0;
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  double cost = residuals_and_jacobian(x, track, cameras, &r, &jac);
  // A start behind some camera has no usable gradient; hand it back unchanged
  // and let the caller's cheirality filter deal with it.
  if (!std::isfinite(cost)) return x;

  double lambda = 1e-3;
  for (int iter = 0; iter < kMaxLmIterations; ++iter) {
    const Mat3 jtj = jac.transpose() * jac;
    const Vec3 g = jac.transpose() * r;
    const Mat3 damped = jtj + lambda * Mat3::Identity();
    const Vec3 step = damped.ldlt().solve(-g);
    if (!step.allFinite()) break;
    if (step.norm() < kStepTolScale * (1.0 + x.norm())) break;

    const Vec3 trial = x + step;
    const double trial_cost = residuals_and_jacobian(trial, track, cameras, nullptr, nullptr);
    if (trial_cost < cost) {
      const double decrease = cost - trial_cost;
      x = trial;
      cost = residuals_and_jacobian(x, track, cameras, &r, &jac);
      lambda *= 0.1;
      if (decrease < kCostDecreaseTol) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e16) break;
    }
  }
  return x;
}

TriangulationResult triangulate_all(const std::vector<Track>& tracks, const CameraLookup& cameras,
                                    double max_reproj_error) {
  check_cameras_present(tracks, cameras);
  std::vector<TrackOutcome> outcomes(tracks.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(tracks.size()); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    outcomes[idx] = process_track(tracks[idx], idx, cameras, max_reproj_error);
  }
  return collect(outcomes);
}

TriangulationResult triangulate_all_serial(const std::vector<Track>& tracks, const CameraLookup& cameras,
                                           double max_reproj_error) {
  check_cameras_present(tracks, cameras);
  std::vector<TrackOutcome> outcomes(tracks.size());
  for (std::size_t idx = 0; idx < tracks.size(); ++idx)
    outcomes[idx] = process_track(tracks[idx], idx, cameras, max_reproj_error);
  return collect(outcomes);
}

}  // namespace warpinit
