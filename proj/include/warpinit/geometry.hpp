// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "warpinit/types.hpp"

namespace warpinit {

// Pinhole camera with world-to-camera pose. Pixel convention across the whole
// library: (i, j) = (column, row), pixel centers at integer coordinates.
// External formats with other conventions are normalized at the I/O boundary.
struct Camera {
  ViewId id = 0;
  Mat3 K = Mat3::Identity();   // intrinsics, pixels
  Mat3 R = Mat3::Identity();   // world -> camera rotation
  Vec3 t = Vec3::Zero();       // world -> camera translation
  int width = 1;
  int height = 1;

  // Throws ErrorKind::invalid_input when any type invariant is broken:
  // K upper-triangular with positive focals and K(2,2) = 1, R orthonormal
  // with det +1 (both within 1e-9), dimensions >= 1.
  void validate() const;

  Vec3 center() const { return -R.transpose() * t; }
  Mat34 projection_matrix() const;

  // Camera-frame z of a world point; positive in front of the camera.
  double depth_of(const Vec3& world_point) const { return (R * world_point + t).z(); }

  double image_diagonal() const { return std::hypot(static_cast<double>(width), static_cast<double>(height)); }
};

struct DepthMap {
  ViewId view = 0;
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, values[j * width + i]

  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * width + i]; }
  double& at(int i, int j) { return values[static_cast<std::size_t>(j) * width + i]; }
};

// NaN, +/-inf and non-positive depths all mark invalid pixels.
inline bool depth_valid(double d) { return std::isfinite(d) && d > 0.0; }

struct Pointmap {
  ViewId view = 0;
  int width = 0;
  int height = 0;
  std::vector<Vec3> points;          // world frame, row-major
  std::vector<std::uint8_t> valid;   // 1 iff the source depth pixel was valid

  const Vec3& at(int i, int j) const { return points[static_cast<std::size_t>(j) * width + i]; }
  bool valid_at(int i, int j) const { return valid[static_cast<std::size_t>(j) * width + i] != 0; }
  std::size_t size() const { return points.size(); }
};

struct SceneScale {
  double radius = 1.0;   // S: max distance of any camera center from the centroid
  Vec3 centroid = Vec3::Zero();
};

// Perspective projection pi(K(RX + t)). Returns nullopt for points with
// camera-frame z <= 1e-12 so callers can filter behind-camera points.
std::optional<Vec2> project(const Camera& camera, const Vec3& world_point);

// K^-1 [i, j, 1]^T * depth, in the camera frame. Throws on depth <= 0.
Vec3 backproject_pixel(const Camera& camera, const Vec2& pixel, double depth);

// World-frame pointmap R^T(backprojection - t) per valid pixel. Invalid depth
// pixels yield invalid pointmap entries with a zero position.
Pointmap backproject_depthmap(const Camera& camera, const DepthMap& depth);
Pointmap backproject_depthmap_serial(const Camera& camera, const DepthMap& depth);

// Bounding-sphere-style scene scale: centroid of camera centers plus the max
// distance from it. Falls back to S = 1 when all centers coincide.
SceneScale scene_scale(const std::vector<Camera>& cameras);

}  // namespace warpinit
