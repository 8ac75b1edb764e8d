// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#include "warpinit/geometry.hpp"

#include <string>

#include "warpinit/errors.hpp"
#include "warpinit/log.hpp"

namespace warpinit {

namespace {

constexpr double kBehindCameraEps = 1e-12;
constexpr double kOrthonormalTol = 1e-9;

// Shared by the serial and OpenMP paths so both execute the exact same
// floating-point operations per pixel.
inline void backproject_row(const Camera& camera, const Mat3& K_inv, const Mat3& R_T,
                            const DepthMap& depth, int j, Pointmap& out) {
  const std::size_t row = static_cast<std::size_t>(j) * depth.width;
  for (int i = 0; i < depth.width; ++i) {
    const double d = depth.values[row + i];
    if (!depth_valid(d)) {
      out.points[row + i].setZero();
      out.valid[row + i] = 0;
      continue;
    }
    const Vec3 cam_point = K_inv * Vec3(static_cast<double>(i), static_cast<double>(j), 1.0) * d;
    out.points[row + i] = R_T * (cam_point - camera.t);
    out.valid[row + i] = 1;
  }
}

}  // namespace

void Camera::validate() const {
  if (width < 1 || height < 1) throw_invalid("camera " + std::to_string(id) + ": non-positive image dimensions");
  if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0)
    throw_invalid("camera " + std::to_string(id) + ": K is not upper-triangular");
  if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0))
    throw_invalid("camera " + std::to_string(id) + ": non-positive focal length");
  if (std::abs(K(2, 2) - 1.0) > 1e-12) throw_invalid("camera " + std::to_string(id) + ": K(2,2) != 1");
  const Mat3 RtR = R * R.transpose();
  if ((RtR - Mat3::Identity()).cwiseAbs().maxCoeff() > kOrthonormalTol)
    throw_invalid("camera " + std::to_string(id) + ": R is not orthonormal");
  if (std::abs(R.determinant() - 1.0) > kOrthonormalTol)
    throw_invalid("camera " + std::to_string(id) + ": det(R) != +1");
  if (!K.allFinite() || !R.allFinite() || !t.allFinite())
    throw_invalid("camera " + std::to_string(id) + ": non-finite parameters");
}

Mat34 Camera::projection_matrix() const {
  Mat34 Rt;
  Rt.leftCols<3>() = R;
  Rt.col(3) = t;
  return K * Rt;
}

std::optional<Vec2> project(const Camera& camera, const Vec3& world_point) {
  const Vec3 cam_point = camera.R * world_point + camera.t;
  if (cam_point.z() <= kBehindCameraEps) return std::nullopt;
  const Vec3 h = camera.K * cam_point;
  return Vec2(h.x() / h.z(), h.y() / h.z());
}

Vec3 backproject_pixel(const Camera& camera, const Vec2& pixel, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw_invalid("backproject_pixel: depth must be positive and finite, got " + std::to_string(depth));
  }
  const Mat3 K_inv = camera.K.inverse();
  return K_inv * Vec3(pixel.x(), pixel.y(), 1.0) * depth;
}

Pointmap backproject_depthmap_serial(const Camera& camera, const DepthMap& depth) {
  if (depth.width != camera.width || depth.height != camera.height) {
    throw_invalid("backproject_depthmap: depth map " + std::to_string(depth.width) + "x" +
                  std::to_string(depth.height) + " does not match camera " + std::to_string(camera.width) + "x" +
                  std::to_string(camera.height));
  }
  Pointmap out;
  out.view = depth.view;
  out.width = depth.width;
  out.height = depth.height;
  out.points.resize(depth.values.size());
  out.valid.resize(depth.values.size());
  const Mat3 K_inv = camera.K.inverse();
  const Mat3 R_T = camera.R.transpose();
  for (int j = 0; j < depth.height; ++j) {
    backproject_row(camera, K_inv, R_T, depth, j, out);
  }
  return out;
}

Pointmap backproject_depthmap(const Camera& camera, const DepthMap& depth) {
  if (depth.width != camera.width || depth.height != camera.height) {
    throw_invalid("backproject_depthmap: depth map " + std::to_string(depth.width) + "x" +
                  std::to_string(depth.height) + " does not match camera " + std::to_string(camera.width) + "x" +
                  std::to_string(camera.height));
  }
  Pointmap out;
  out.view = depth.view;
  out.width = depth.width;
  out.height = depth.height;
  out.points.resize(depth.values.size());
  out.valid.resize(depth.values.size());
  const Mat3 K_inv = camera.K.inverse();
  const Mat3 R_T = camera.R.transpose();
#pragma omp parallel for schedule(static)
  for (int j = 0; j < depth.height; ++j) {
    backproject_row(camera, K_inv, R_T, depth, j, out);
  }
  return out;
}

SceneScale scene_scale(const std::vector<Camera>& cameras) {
  if (cameras.empty()) throw_invalid("scene_scale: empty camera list");
  Vec3 centroid = Vec3::Zero();
  for (const Camera& cam : cameras) centroid += cam.center();
  centroid /= static_cast<double>(cameras.size());

  double max_dist = 0.0;
  for (const Camera& cam : cameras) {
    max_dist = std::max(max_dist, (cam.center() - centroid).norm());
  }

  SceneScale scale;
  scale.centroid = centroid;
  if (max_dist <= 0.0) {
    log::warn("scene_scale: all camera centers coincide, falling back to S = 1");
    scale.radius = 1.0;
  } else {
    scale.radius = max_dist;
  }
  return scale;
}

}  // namespace warpinit
