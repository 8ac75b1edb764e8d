// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#include "warpinit/cbps.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "warpinit/errors.hpp"
#include "warpinit/log.hpp"
#include "warpinit/random.hpp"
#include "warpinit/spatial.hpp"

namespace warpinit {

namespace {

const Image* image_for_view(const std::vector<Image>& images, ViewId view) {
  for (const auto& image : images)
    if (image.view == view) return &image;
  return nullptr;
}

void check_image_dims(const Image* image, const Pointmap& pm) {
  if (image != nullptr && (image->width != pm.width || image->height != pm.height))
    throw_invalid("image dimensions differ from pointmap for view " + std::to_string(pm.view));
}

// Inclusion flags for one pointmap row; shared by the serial and parallel
// drivers so both keep identical point sets.
void flag_row(const Pointmap& pm, const KdTree& tree, double r, int j, std::uint8_t* flags) {
  for (int i = 0; i < pm.width; ++i) {
    const std::size_t idx = static_cast<std::size_t>(j) * static_cast<std::size_t>(pm.width) +
                            static_cast<std::size_t>(i);
    flags[idx] = (pm.valid[idx] != 0 && tree.has_within(pm.points[idx], r)) ? 1 : 0;
  }
}

PointCloud collect_flagged(const std::vector<Pointmap>& cbp,
                           const std::vector<std::vector<std::uint8_t>>& flags,
                           const std::vector<Image>& images) {
  PointCloud cloud;
  for (std::size_t v = 0; v < cbp.size(); ++v) {
    const Pointmap& pm = cbp[v];
    const Image* image = image_for_view(images, pm.view);
    for (int j = 0; j < pm.height; ++j)
      for (int i = 0; i < pm.width; ++i) {
        const std::size_t idx = static_cast<std::size_t>(j) * static_cast<std::size_t>(pm.width) +
                                static_cast<std::size_t>(i);
        if (flags[v][idx] == 0) continue;
        cloud.push_back(pm.points[idx], image != nullptr ? image->at(i, j) : kWhite,
                        PointSource::cbp);
      }
  }
  return cloud;
}

std::vector<Vec3> control_positions(const std::vector<ControlPoint>& controls) {
  std::vector<Vec3> positions;
  positions.reserve(controls.size());
  for (const auto& control : controls) positions.push_back(control.position);
  return positions;
}

}  // namespace

void PointCloud::validate() const {
  if (positions.size() != colors.size() || positions.size() != tags.size())
    throw_invalid("point cloud field lengths differ");
  for (const auto& p : positions)
    if (!p.allFinite()) throw_invalid("non-finite point cloud position");
}

void SamplingConfig::validate() const {
  if (!(radius_fraction >= 0.0) || !(margin > 0.0) || !(cluster_radius > 0.0))
    throw_invalid("sampling config fields must be positive");
  if (max_points < 1) throw_invalid("max_points must be at least 1");
}

double default_radius_fraction(std::size_t n_views) { return n_views >= 6 ? 1.0 / 16.0 : 1.0 / 8.0; }

PointCloud cbps_sample(const std::vector<Pointmap>& cbp, const std::vector<ControlPoint>& controls,
                       double r, const std::vector<Image>& images) {
  if (r < 0.0) throw_invalid("sampling radius must be non-negative");
  if (controls.empty()) {
    log::warn("cbps: no control points, sampling nothing");
    return {};
  }
  const KdTree tree(control_positions(controls));
  std::vector<std::vector<std::uint8_t>> flags(cbp.size());
  for (std::size_t v = 0; v < cbp.size(); ++v) {
    const Pointmap& pm = cbp[v];
    check_image_dims(image_for_view(images, pm.view), pm);
    flags[v].assign(pm.size(), 0);
#pragma omp parallel for schedule(static)
    for (int j = 0; j < pm.height; ++j) flag_row(pm, tree, r, j, flags[v].data());
  }
  return collect_flagged(cbp, flags, images);
}

PointCloud cbps_sample_serial(const std::vector<Pointmap>& cbp,
                              const std::vector<ControlPoint>& controls, double r,
                              const std::vector<Image>& images) {
  if (r < 0.0) throw_invalid("sampling radius must be non-negative");
  if (controls.empty()) {
    log::warn("cbps: no control points, sampling nothing");
    return {};
  }
  const KdTree tree(control_positions(controls));
  std::vector<std::vector<std::uint8_t>> flags(cbp.size());
  for (std::size_t v = 0; v < cbp.size(); ++v) {
    const Pointmap& pm = cbp[v];
    check_image_dims(image_for_view(images, pm.view), pm);
    flags[v].assign(pm.size(), 0);
    for (int j = 0; j < pm.height; ++j) flag_row(pm, tree, r, j, flags[v].data());
  }
  return collect_flagged(cbp, flags, images);
}

PointCloud merge_with_sfm(const PointCloud& sfm, const PointCloud& sampled, double margin) {
  if (!(margin > 0.0)) throw_invalid("margin must be positive");
  sfm.validate();
  sampled.validate();

  PointCloud out = sfm;
  if (sfm.size() == 0) {
    for (std::size_t i = 0; i < sampled.size(); ++i)
      out.push_back(sampled.positions[i], sampled.colors[i], sampled.tags[i]);
    return out;
  }
  const KdTree tree(sfm.positions);
  for (std::size_t i = 0; i < sampled.size(); ++i)
    if (!tree.has_within(sampled.positions[i], margin))
      out.push_back(sampled.positions[i], sampled.colors[i], sampled.tags[i]);
  return out;
}

PointCloud radius_cluster(const PointCloud& cloud, double cluster_radius) {
  if (!(cluster_radius > 0.0)) throw_invalid("cluster radius must be positive");
  cloud.validate();

  PointCloud out;
  IncrementalGrid kept(cluster_radius);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (kept.has_within_cell_radius(cloud.positions[i])) continue;
    kept.insert(cloud.positions[i]);
    out.push_back(cloud.positions[i], cloud.colors[i], cloud.tags[i]);
  }
  return out;
}

PointCloud downsample(const PointCloud& cloud, std::size_t max_points, std::uint64_t seed) {
  if (max_points < 1) throw_invalid("max_points must be at least 1");
  cloud.validate();
  if (cloud.size() <= max_points) return cloud;

  std::vector<std::size_t> cbp_indices;
  std::size_t sfm_count = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.tags[i] == PointSource::sfm)
      ++sfm_count;
    else
      cbp_indices.push_back(i);
  }
  const std::size_t keep_cbp = max_points > sfm_count ? max_points - sfm_count : 0;
  if (keep_cbp >= cbp_indices.size()) return cloud;

  // Partial Fisher-Yates: the first keep_cbp slots become a uniform subset.
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < keep_cbp; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(bounded_draw(rng, cbp_indices.size() - i));
    std::swap(cbp_indices[i], cbp_indices[j]);
  }
  std::vector<std::uint8_t> keep(cloud.size(), 0);
  for (std::size_t i = 0; i < keep_cbp; ++i) keep[cbp_indices[i]] = 1;

  PointCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.tags[i] == PointSource::sfm || keep[i] != 0)
      out.push_back(cloud.positions[i], cloud.colors[i], cloud.tags[i]);
  return out;
}

}  // namespace warpinit
