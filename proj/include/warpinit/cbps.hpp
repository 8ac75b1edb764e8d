// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "warpinit/geometry.hpp"
#include "warpinit/image.hpp"
#include "warpinit/triangulate.hpp"
#include "warpinit/types.hpp"

namespace warpinit {

enum class PointSource : std::uint8_t { sfm = 0, cbp = 1 };

struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Rgb> colors;
  std::vector<PointSource> tags;

  std::size_t size() const { return positions.size(); }
  void push_back(const Vec3& position, const Rgb& color, PointSource tag) {
    positions.push_back(position);
    colors.push_back(color);
    tags.push_back(tag);
  }
  void validate() const;
};

struct SamplingConfig {
  double radius_fraction = 0.0;  // r = radius_fraction * scene scale; 0 = pick by view count
  double margin = 0.05;          // scene units, sfm-proximity removal
  double cluster_radius = 0.01;  // scene units, greedy thinning
  std::size_t max_points = 30000;

  void validate() const;
};

// 1/8 of the scene scale up to 5 views, 1/16 from 6 views on.
double default_radius_fraction(std::size_t n_views);

// Keeps exactly the deformed points within distance r (inclusive) of some
// control point, scanning pointmaps in the given order and pixels row-major.
// Colors come from the matching view's image when one is supplied, white
// otherwise. Accelerated by a spatial index but defined as the brute-force
// set. Empty controls yield an empty cloud with a warning.
PointCloud cbps_sample(const std::vector<Pointmap>& cbp, const std::vector<ControlPoint>& controls,
                       double r, const std::vector<Image>& images = {});
PointCloud cbps_sample_serial(const std::vector<Pointmap>& cbp,
                              const std::vector<ControlPoint>& controls, double r,
                              const std::vector<Image>& images = {});

// sfm points all pass through; sampled points survive only when strictly
// farther than `margin` from every sfm point.
PointCloud merge_with_sfm(const PointCloud& sfm, const PointCloud& sampled, double margin);

// Greedy sequential thinning in input order: a point is kept iff every
// previously kept point is farther than cluster_radius away.
PointCloud radius_cluster(const PointCloud& cloud, double cluster_radius);

// Caps the cloud at max_points with a seeded uniform choice among cbp-tagged
// points; sfm-tagged points are never removed. Kept points stay in input
// order.
PointCloud downsample(const PointCloud& cloud, std::size_t max_points, std::uint64_t seed);

}  // namespace warpinit
