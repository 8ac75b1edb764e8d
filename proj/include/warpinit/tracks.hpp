// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <vector>

#include "warpinit/geometry.hpp"
#include "warpinit/types.hpp"

namespace warpinit {

struct PairwiseMatch {
  ViewId view_a = 0;
  ViewId view_b = 0;
  Vec2 pixel_a = Vec2::Zero();
  Vec2 pixel_b = Vec2::Zero();
  double confidence = 1.0;
};

// A globally consistent multi-view correspondence: at most one pixel per view,
// all observing the same 3D point.
struct Track {
  std::map<ViewId, Vec2> observations;
  ViewId anchor_view = 0;  // lowest observing view id
  Vec2 anchor_pixel = Vec2::Zero();

  std::size_t size() const { return observations.size(); }
};

struct ViewNeighborhood {
  ViewId query = 0;
  std::vector<ViewId> key_views;  // ascending by spherical distance, |key_views| = k
};

// k nearest views to the query under the spherical-coordinate distance
// d_ij = sqrt((alpha_i-alpha_j)^2 + (eps_i-eps_j)^2 + (r_i-r_j)^2) computed on
// camera centers, with azimuth alpha = atan2(y,x), elevation eps = asin(z/r)
// and radius r = |C|. Ties break on ascending view id. A center at the origin
// gets alpha = eps = 0.
ViewNeighborhood select_key_views(const std::vector<Camera>& cameras, ViewId query, int k);

// Union-find over pixel nodes quantized to `quantization` (grid cells of that
// step). Connected components of the match graph with >= 2 views become
// tracks; a component holding two pixels of the same view keeps the one
// backed by the highest-confidence incident match (ties: lexicographically
// smaller pixel). Output is sorted by anchor and independent of input order.
std::vector<Track> build_tracks(const std::vector<PairwiseMatch>& matches, double quantization = 1.0);

// Fraction of tracks observed by at least three views; 0 for no tracks.
double multiview_score(const std::vector<Track>& tracks);

}  // namespace warpinit
