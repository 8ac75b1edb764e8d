// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "warpinit/types.hpp"

namespace warpinit {

// Static kd-tree over a fixed point set. Distances are compared as squared
// norms computed with the same expression a brute-force scan would use, so
// boundary-equality results match a direct filter exactly.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  // True iff some point p satisfies |p - query|^2 <= radius^2 (inclusive).
  bool has_within(const Vec3& query, double radius) const;

  // Index and squared distance of the closest point; (npos, inf) when empty.
  std::pair<std::size_t, double> nearest(const Vec3& query) const;

  // All indices with |p - query|^2 <= radius^2, ascending.
  std::vector<std::size_t> radius_indices(const Vec3& query, double radius) const;

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

 private:
  struct Node {
    int axis = -1;            // -1 marks a leaf
    double split = 0.0;
    std::uint32_t left = 0;   // child node ids, valid when axis >= 0
    std::uint32_t right = 0;
    std::uint32_t begin = 0;  // index range, valid at leaves
    std::uint32_t end = 0;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end);
  void collect_within(std::uint32_t node_id, const Vec3& query, double sq_radius,
                      std::vector<std::size_t>* out) const;
  bool any_within(std::uint32_t node_id, const Vec3& query, double sq_radius) const;
  void nearest_in(std::uint32_t node_id, const Vec3& query, std::size_t* best_idx, double* best_sq) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;  // permutation of point indices grouped by leaf
  std::vector<Node> nodes_;
  std::uint32_t root_ = 0;
};

// Append-only uniform grid for greedy sequential thinning. The cell size is
// the query radius, so membership tests only touch the 3x3x3 neighborhood.
class IncrementalGrid {
 public:
  explicit IncrementalGrid(double cell_size);

  void insert(const Vec3& point);
  // True iff an inserted point lies within cell_size of the query (<=).
  bool has_within_cell_radius(const Vec3& query) const;

 private:
  std::int64_t cell_coord(double v) const;
  static std::uint64_t cell_key(std::int64_t x, std::int64_t y, std::int64_t z);

  double cell_size_;
  std::vector<Vec3> points_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> cells_;
};

}  // namespace warpinit
