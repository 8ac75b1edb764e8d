// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#include "warpinit/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "warpinit/errors.hpp"

namespace warpinit {

namespace {
constexpr std::uint32_t kLeafSize = 16;
}

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

std::uint32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const std::uint32_t node_id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();

  if (end - begin <= kLeafSize) {
    nodes_[node_id].begin = begin;
    nodes_[node_id].end = end;
    return node_id;
  }

  Vec3 lo = points_[order_[begin]];
  Vec3 hi = lo;
  for (std::uint32_t k = begin + 1; k < end; ++k) {
    lo = lo.cwiseMin(points_[order_[k]]);
    hi = hi.cwiseMax(points_[order_[k]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });

  nodes_[node_id].axis = axis;
  nodes_[node_id].split = points_[order_[mid]][axis];
  const std::uint32_t left = build(begin, mid);
  const std::uint32_t right = build(mid, end);
  nodes_[node_id].left = left;
  nodes_[node_id].right = right;
  return node_id;
}

bool KdTree::has_within(const Vec3& query, double radius) const {
  if (points_.empty()) return false;
  return any_within(root_, query, radius * radius);
}

bool KdTree::any_within(std::uint32_t node_id, const Vec3& query, double sq_radius) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::uint32_t k = node.begin; k < node.end; ++k) {
      if ((points_[order_[k]] - query).squaredNorm() <= sq_radius) return true;
    }
    return false;
  }
  const double delta = query[node.axis] - node.split;
  const std::uint32_t near = delta < 0.0 ? node.left : node.right;
  const std::uint32_t far = delta < 0.0 ? node.right : node.left;
  if (any_within(near, query, sq_radius)) return true;
  if (delta * delta <= sq_radius) return any_within(far, query, sq_radius);
  return false;
}

std::pair<std::size_t, double> KdTree::nearest(const Vec3& query) const {
  std::size_t best_idx = npos;
  double best_sq = std::numeric_limits<double>::infinity();
  if (!points_.empty()) nearest_in(root_, query, &best_idx, &best_sq);
  return {best_idx, best_sq};
}

void KdTree::nearest_in(std::uint32_t node_id, const Vec3& query, std::size_t* best_idx, double* best_sq) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::uint32_t k = node.begin; k < node.end; ++k) {
      const double sq = (points_[order_[k]] - query).squaredNorm();
      if (sq < *best_sq || (sq == *best_sq && order_[k] < *best_idx)) {
        *best_sq = sq;
        *best_idx = order_[k];
      }
    }
    return;
  }
  const double delta = query[node.axis] - node.split;
  const std::uint32_t near = delta < 0.0 ? node.left : node.right;
  const std::uint32_t far = delta < 0.0 ? node.right : node.left;
  nearest_in(near, query, best_idx, best_sq);
  if (delta * delta <= *best_sq) nearest_in(far, query, best_idx, best_sq);
}

std::vector<std::size_t> KdTree::radius_indices(const Vec3& query, double radius) const {
  std::vector<std::size_t> out;
  if (!points_.empty()) collect_within(root_, query, radius * radius, &out);
  std::sort(out.begin(), out.end());
  return out;
}

void KdTree::collect_within(std::uint32_t node_id, const Vec3& query, double sq_radius,
                            std::vector<std::size_t>* out) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::uint32_t k = node.begin; k < node.end; ++k) {
      if ((points_[order_[k]] - query).squaredNorm() <= sq_radius) out->push_back(order_[k]);
    }
    return;
  }
  const double delta = query[node.axis] - node.split;
  const std::uint32_t near = delta < 0.0 ? node.left : node.right;
  const std::uint32_t far = delta < 0.0 ? node.right : node.left;
  collect_within(near, query, sq_radius, out);
  if (delta * delta <= sq_radius) collect_within(far, query, sq_radius, out);
}

IncrementalGrid::IncrementalGrid(double cell_size) : cell_size_(cell_size) {
  if (!(cell_size > 0.0)) throw_invalid("IncrementalGrid: cell size must be positive");
}

std::int64_t IncrementalGrid::cell_coord(double v) const {
  return static_cast<std::int64_t>(std::floor(v / cell_size_));
}

std::uint64_t IncrementalGrid::cell_key(std::int64_t x, std::int64_t y, std::int64_t z) {
  // Fibonacci-style mix of the three cell coordinates.
  std::uint64_t h = static_cast<std::uint64_t>(x) * 0x9e3779b97f4a7c15ULL;
  h ^= static_cast<std::uint64_t>(y) * 0xc2b2ae3d27d4eb4fULL + (h << 6) + (h >> 2);
  h ^= static_cast<std::uint64_t>(z) * 0x165667b19e3779f9ULL + (h << 6) + (h >> 2);
  return h;
}

void IncrementalGrid::insert(const Vec3& point) {
  const std::uint32_t idx = static_cast<std::uint32_t>(points_.size());
  points_.push_back(point);
  cells_[cell_key(cell_coord(point.x()), cell_coord(point.y()), cell_coord(point.z()))].push_back(idx);
}

bool IncrementalGrid::has_within_cell_radius(const Vec3& query) const {
  const double sq_radius = cell_size_ * cell_size_;
  const std::int64_t cx = cell_coord(query.x());
  const std::int64_t cy = cell_coord(query.y());
  const std::int64_t cz = cell_coord(query.z());
  for (std::int64_t dx = -1; dx <= 1; ++dx) {
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      for (std::int64_t dz = -1; dz <= 1; ++dz) {
        const auto it = cells_.find(cell_key(cx + dx, cy + dy, cz + dz));
        if (it == cells_.end()) continue;
        for (const std::uint32_t idx : it->second) {
          if ((points_[idx] - query).squaredNorm() <= sq_radius) return true;
        }
      }
    }
  }
  return false;
}

}  // namespace warpinit
