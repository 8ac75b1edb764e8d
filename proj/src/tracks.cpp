// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#include "warpinit/tracks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <tuple>

#include "warpinit/errors.hpp"

namespace warpinit {

namespace {

struct SphericalCoord {
  double azimuth = 0.0;
  double elevation = 0.0;
  double radius = 0.0;
};

SphericalCoord spherical_of(const Vec3& center) {
  SphericalCoord s;
  s.radius = center.norm();
  if (s.radius > 0.0) {
    s.azimuth = std::atan2(center.y(), center.x());
    s.elevation = std::asin(std::clamp(center.z() / s.radius, -1.0, 1.0));
  }
  return s;
}

bool pixel_lex_less(const Vec2& a, const Vec2& b) {
  return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
}

struct UnionFind {
  std::vector<int> parent;

  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }

  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }

  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

struct PixelNode {
  ViewId view = 0;
  Vec2 pixel = Vec2::Zero();      // representative: highest-confidence endpoint
  double confidence = -1.0;       // best incident match confidence

  void offer(const Vec2& p, double conf) {
    if (conf > confidence || (conf == confidence && pixel_lex_less(p, pixel))) {
      pixel = p;
      confidence = conf;
    }
  }
};

}  // namespace

ViewNeighborhood select_key_views(const std::vector<Camera>& cameras, ViewId query, int k) {
  if (k < 0) throw_invalid("select_key_views: k must be non-negative");
  if (static_cast<std::size_t>(k) >= cameras.size()) {
    throw_invalid("select_key_views: k = " + std::to_string(k) + " requires more than " +
                  std::to_string(cameras.size()) + " cameras");
  }
  const Camera* query_cam = nullptr;
  for (const Camera& cam : cameras) {
    if (cam.id == query) {
      query_cam = &cam;
      break;
    }
  }
  if (query_cam == nullptr) throw_invalid("select_key_views: unknown query view " + std::to_string(query));

  const SphericalCoord q = spherical_of(query_cam->center());
  std::vector<std::pair<double, ViewId>> ranked;
  ranked.reserve(cameras.size() - 1);
  for (const Camera& cam : cameras) {
    if (cam.id == query) continue;
    const SphericalCoord c = spherical_of(cam.center());
    const double da = q.azimuth - c.azimuth;
    const double de = q.elevation - c.elevation;
    const double dr = q.radius - c.radius;
    ranked.emplace_back(std::sqrt(da * da + de * de + dr * dr), cam.id);
  }
  std::sort(ranked.begin(), ranked.end());

  ViewNeighborhood out;
  out.query = query;
  out.key_views.reserve(k);
  for (int i = 0; i < k; ++i) out.key_views.push_back(ranked[i].second);
  return out;
}

std::vector<Track> build_tracks(const std::vector<PairwiseMatch>& matches, double quantization) {
  if (!(quantization > 0.0)) throw_invalid("build_tracks: quantization step must be positive");

  // Pixel cell -> node id. An ordered map keeps node numbering independent of
  // match order only up to first-seen order, so components are later reduced
  // with order-free rules.
  std::map<std::tuple<ViewId, std::int64_t, std::int64_t>, int> node_of_cell;
  std::vector<PixelNode> nodes;

  const auto node_for = [&](ViewId view, const Vec2& pixel) {
    const auto cell = std::make_tuple(view, static_cast<std::int64_t>(std::floor(pixel.x() / quantization)),
                                      static_cast<std::int64_t>(std::floor(pixel.y() / quantization)));
    auto [it, inserted] = node_of_cell.try_emplace(cell, static_cast<int>(nodes.size()));
    if (inserted) {
      PixelNode node;
      node.view = view;
      nodes.push_back(node);
    }
    return it->second;
  };

  std::vector<std::pair<int, int>> edges;
  edges.reserve(matches.size());
  for (const PairwiseMatch& m : matches) {
    if (m.view_a == m.view_b) throw_invalid("build_tracks: match connects view " + std::to_string(m.view_a) +
                                            " with itself");
    const int a = node_for(m.view_a, m.pixel_a);
    const int b = node_for(m.view_b, m.pixel_b);
    nodes[a].offer(m.pixel_a, m.confidence);
    nodes[b].offer(m.pixel_b, m.confidence);
    edges.emplace_back(a, b);
  }

  UnionFind uf(static_cast<int>(nodes.size()));
  for (const auto& [a, b] : edges) uf.unite(a, b);

  std::map<int, std::vector<int>> components;
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) components[uf.find(i)].push_back(i);

  std::vector<Track> tracks;
  for (auto& [root, members] : components) {
    // Same-view conflicts: keep the highest-confidence node per view.
    std::map<ViewId, int> chosen;
    for (const int idx : members) {
      const PixelNode& node = nodes[idx];
      auto [it, inserted] = chosen.try_emplace(node.view, idx);
      if (!inserted) {
        const PixelNode& held = nodes[it->second];
        if (node.confidence > held.confidence ||
            (node.confidence == held.confidence && pixel_lex_less(node.pixel, held.pixel))) {
          it->second = idx;
        }
      }
    }
    if (chosen.size() < 2) continue;

    Track track;
    for (const auto& [view, idx] : chosen) track.observations.emplace(view, nodes[idx].pixel);
    const auto& first = *track.observations.begin();
    track.anchor_view = first.first;
    track.anchor_pixel = first.second;
    tracks.push_back(std::move(track));
  }

  std::sort(tracks.begin(), tracks.end(), [](const Track& a, const Track& b) {
    if (a.anchor_view != b.anchor_view) return a.anchor_view < b.anchor_view;
    return pixel_lex_less(a.anchor_pixel, b.anchor_pixel);
  });
  return tracks;
}

double multiview_score(const std::vector<Track>& tracks) {
  if (tracks.empty()) return 0.0;
  std::size_t covisible = 0;
  for (const Track& t : tracks) {
    if (t.size() >= 3) ++covisible;
  }
  return static_cast<double>(covisible) / static_cast<double>(tracks.size());
}

}  // namespace warpinit
