// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "test_support.hpp"
#include "warpinit/random.hpp"
#include "warpinit/spatial.hpp"

using namespace warpinit;

namespace {

std::vector<Vec3> random_points(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::vector<Vec3> points;
  points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) points.push_back(testsup::random_vec3(rng, lo, hi));
  return points;
}

std::vector<std::size_t> brute_radius_indices(const std::vector<Vec3>& points, const Vec3& query,
                                              double r) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < points.size(); ++i)
    if ((points[i] - query).squaredNorm() <= r * r) out.push_back(i);
  return out;
}

}  // namespace

TEST_CASE("KdTree: radius queries equal the brute-force filter exactly") {
  std::mt19937_64 rng(101);
  auto points = random_points(rng, 500, -3.0, 3.0);
  // Plant exact boundary cases: points at exactly the query radius.
  const Vec3 probe(0.25, -0.5, 1.0);
  const double r = 0.75;
  points.push_back(probe + Vec3(r, 0.0, 0.0));
  points.push_back(probe + Vec3(0.0, -r, 0.0));
  const KdTree tree(points);

  CHECK(tree.radius_indices(probe, r) == brute_radius_indices(points, probe, r));
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 q = testsup::random_vec3(rng, -3.5, 3.5);
    const double radius = uniform_real(rng, 0.0, 2.0);
    CHECK(tree.radius_indices(q, radius) == brute_radius_indices(points, q, radius));
  }
}

TEST_CASE("KdTree: has_within equals the brute-force predicate on boundaries") {
  std::mt19937_64 rng(102);
  const auto points = random_points(rng, 300, -1.0, 1.0);
  const KdTree tree(points);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 q = testsup::random_vec3(rng, -1.2, 1.2);
    const double radius = uniform_real(rng, 0.0, 0.5);
    CHECK(tree.has_within(q, radius) == !brute_radius_indices(points, q, radius).empty());
  }
  // Exact-distance probe.
  const Vec3 q = points[0] + Vec3(0.25, 0.0, 0.0);
  CHECK(tree.has_within(q, 0.25));
}

TEST_CASE("KdTree: nearest matches the brute-force argmin") {
  std::mt19937_64 rng(103);
  const auto points = random_points(rng, 400, -2.0, 2.0);
  const KdTree tree(points);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 q = testsup::random_vec3(rng, -2.5, 2.5);
    const auto [idx, sq] = tree.nearest(q);
    std::size_t best = KdTree::npos;
    double best_sq = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double d = (points[i] - q).squaredNorm();
      if (d < best_sq) {
        best_sq = d;
        best = i;
      }
    }
    CHECK(idx == best);
    CHECK(sq == best_sq);
  }
}

TEST_CASE("KdTree: empty tree behavior") {
  const KdTree tree;
  CHECK(tree.empty());
  CHECK_FALSE(tree.has_within(Vec3::Zero(), 10.0));
  CHECK(tree.nearest(Vec3::Zero()).first == KdTree::npos);
  CHECK(tree.radius_indices(Vec3::Zero(), 10.0).empty());
}

TEST_CASE("KdTree: duplicate points are all reported") {
  std::vector<Vec3> points{Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(5, 5, 5)};
  const KdTree tree(points);
  CHECK(tree.radius_indices(Vec3(1, 1, 1), 0.0) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("IncrementalGrid: membership equals the brute-force distance test") {
  std::mt19937_64 rng(104);
  const double cell = 0.2;
  IncrementalGrid grid(cell);
  std::vector<Vec3> inserted;
  for (int step = 0; step < 500; ++step) {
    const Vec3 q = testsup::random_vec3(rng, -1.0, 1.0);
    bool brute = false;
    for (const auto& p : inserted)
      if ((q - p).squaredNorm() <= cell * cell) {
        brute = true;
        break;
      }
    CHECK(grid.has_within_cell_radius(q) == brute);
    if (!brute) {
      grid.insert(q);
      inserted.push_back(q);
    }
  }
}

TEST_CASE("IncrementalGrid: exact boundary distance counts as within") {
  IncrementalGrid grid(0.5);
  grid.insert(Vec3(0.0, 0.0, 0.0));
  CHECK(grid.has_within_cell_radius(Vec3(0.5, 0.0, 0.0)));
  CHECK(grid.has_within_cell_radius(Vec3(0.0, 0.0, 0.5)));
  CHECK_FALSE(grid.has_within_cell_radius(Vec3(0.5 + 1e-12, 0.0, 0.0)));
}

TEST_CASE("IncrementalGrid: points in far cells are not found") {
  IncrementalGrid grid(0.1);
  grid.insert(Vec3(0.0, 0.0, 0.0));
  CHECK_FALSE(grid.has_within_cell_radius(Vec3(1.0, 0.0, 0.0)));
  CHECK_FALSE(grid.has_within_cell_radius(Vec3(-0.2001, 0.0, 0.0)));
}
