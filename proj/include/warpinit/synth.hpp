// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "warpinit/cbps.hpp"
#include "warpinit/geometry.hpp"
#include "warpinit/image.hpp"
#include "warpinit/tracks.hpp"
#include "warpinit/types.hpp"

namespace warpinit {

enum class SurfaceKind { plane, sphere, heightfield };

SurfaceKind surface_kind_from_string(const std::string& name);
std::string to_string(SurfaceKind kind);

// Analytic ground-truth surface. The height field is a sum of three low
// frequency cosine waves with bounded slope, so a spline warp with enough
// controls can represent depth errors measured against it.
struct Surface {
  SurfaceKind kind = SurfaceKind::plane;
  Vec3 plane_point = Vec3::Zero();
  Vec3 plane_normal = Vec3(0.0, 0.0, 1.0);
  Vec3 sphere_center = Vec3::Zero();
  double sphere_radius = 1.5;
  std::array<double, 3> hf_amplitude{};
  std::array<double, 3> hf_omega{};
  std::array<double, 3> hf_direction{};  // wave direction angle in the xy plane
  std::array<double, 3> hf_phase{};

  double height_at(double x, double y) const;
  // Point-to-surface distance: exact for plane and sphere, vertical residual
  // for the height field (slope is bounded, so it is within a constant of the
  // true distance).
  double distance_to(const Vec3& point) const;
};

struct SceneSpec {
  SurfaceKind kind = SurfaceKind::plane;
  int n_views = 3;
  int width = 64;
  int height = 48;
  double corruption = 0.0;       // 0.1 = +-10% multiplicative + smooth additive offset
  double match_fraction = 0.02;  // fraction of each view's pixels emitted as queries
  int sfm_points = 100;
  // Sphere scenes only. The default leaves the whole silhouette inside every
  // frame (exercising invalid-depth borders); radii above ~2.4 fill the frame
  // with a silhouette-free cap whose grazing angle stays bounded.
  double sphere_radius = 1.5;
  // Total azimuth sweep of the camera arc. Narrow arcs keep neighboring
  // frustums overlapping when the surface fills the frame.
  double arc_span_deg = 80.0;
  std::uint64_t seed = 0;
};

// Per-view smooth depth corruption d' = d * mult(i,j) + add(i,j), recorded so
// tests can invert it.
struct CorruptionField {
  int width = 0;
  int height = 0;
  std::vector<double> mult;  // row-major
  std::vector<double> add;
};

struct SyntheticScene {
  SceneSpec spec;
  Surface surface;
  std::vector<Camera> cameras;
  std::vector<DepthMap> true_depths;       // float32-quantized first-hit depths, 0 = miss
  std::vector<DepthMap> corrupted_depths;  // what the pipeline consumes
  std::vector<CorruptionField> corruption;
  std::vector<Image> images;               // procedural per-view colors
  std::vector<PairwiseMatch> matches;      // exact subpixel correspondences
  PointCloud sfm_cloud;                    // sparse true-surface samples
};

// Deterministic for a fixed spec. Throws when the surface is invisible from
// some camera (no pixel hits it).
SyntheticScene generate_scene(const SceneSpec& spec);

// First-hit ray-cast depth used for both depth maps and match visibility;
// exposed for oracle checks. nullopt = the ray misses the surface.
std::optional<double> first_hit_depth(const Camera& camera, const Surface& surface,
                                      const Vec2& pixel);

struct RecoveryReport {
  double rms = 0.0;
  double max_dist = 0.0;
  std::size_t n_points = 0;
};

RecoveryReport evaluate_recovery(const SyntheticScene& scene, const PointCloud& cloud);

// Writes cameras, corrupted depths, images, matches, the sfm cloud and a job
// manifest into dir; returns the manifest path.
std::filesystem::path write_scene(const SyntheticScene& scene, const std::filesystem::path& dir);

}  // namespace warpinit
