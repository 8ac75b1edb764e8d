// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "test_support.hpp"
#include "warpinit/cbps.hpp"
#include "warpinit/random.hpp"

using namespace warpinit;
using testsup::error_kind_of;

namespace {

ControlPoint control_at(const Vec3& position) {
  ControlPoint control;
  control.position = position;
  return control;
}

Pointmap random_pointmap(std::mt19937_64& rng, ViewId view, int width, int height,
                         double invalid_fraction = 0.1) {
  Pointmap pm;
  pm.view = view;
  pm.width = width;
  pm.height = height;
  for (int n = 0; n < width * height; ++n) {
    pm.points.push_back(testsup::random_vec3(rng, -1.0, 1.0));
    pm.valid.push_back(unit_real(rng) < invalid_fraction ? 0 : 1);
  }
  return pm;
}

PointCloud cloud_of(const std::vector<Vec3>& positions, PointSource tag) {
  PointCloud cloud;
  for (const auto& p : positions) cloud.push_back(p, kWhite, tag);
  return cloud;
}

bool same_cloud(const PointCloud& a, const PointCloud& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a.positions[i] - b.positions[i]).norm() != 0.0) return false;
    if (a.colors[i] != b.colors[i]) return false;
    if (a.tags[i] != b.tags[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("cbps_sample: a radius covering the scene keeps every valid point") {
  std::mt19937_64 rng(90);
  const Pointmap pm = random_pointmap(rng, 0, 20, 15);
  std::size_t n_valid = 0;
  for (const auto v : pm.valid) n_valid += v;

  const auto cloud = cbps_sample({pm}, {control_at(Vec3::Zero())}, 10.0);
  CHECK(cloud.size() == n_valid);
  for (const auto tag : cloud.tags) CHECK(tag == PointSource::cbp);
}

TEST_CASE("cbps_sample: radius zero keeps only points coinciding with a control") {
  Pointmap pm;
  pm.view = 0;
  pm.width = 3;
  pm.height = 1;
  pm.points = {Vec3(0.5, 0.25, -1.0), Vec3(0.0, 0.0, 0.0), Vec3(2.0, 2.0, 2.0)};
  pm.valid = {1, 1, 1};
  const auto cloud = cbps_sample({pm}, {control_at(Vec3(0.5, 0.25, -1.0))}, 0.0);
  REQUIRE(cloud.size() == 1);
  CHECK((cloud.positions[0] - Vec3(0.5, 0.25, -1.0)).norm() == 0.0);
}

TEST_CASE("cbps_sample: the radius boundary is inclusive") {
  // Exact binary values keep the distance arithmetic exact.
  const Vec3 control(0.25, -0.5, 0.375);
  const double r = 0.75;
  Pointmap pm;
  pm.view = 0;
  pm.width = 2;
  pm.height = 1;
  pm.points = {control + Vec3(r, 0, 0), control + Vec3(r * (1.0 + 1e-12), 0, 0)};
  pm.valid = {1, 1};
  const auto cloud = cbps_sample({pm}, {control_at(control)}, r);
  REQUIRE(cloud.size() == 1);
  CHECK((cloud.positions[0] - pm.points[0]).norm() == 0.0);
}

TEST_CASE("cbps_sample: equals the brute-force double loop, order included") {
  std::mt19937_64 rng(91);
  std::vector<Pointmap> maps{random_pointmap(rng, 0, 25, 20), random_pointmap(rng, 1, 25, 20)};
  std::vector<ControlPoint> controls;
  std::vector<Vec3> control_positions;
  for (int c = 0; c < 50; ++c) {
    const Vec3 p = testsup::random_vec3(rng, -1.0, 1.0);
    controls.push_back(control_at(p));
    control_positions.push_back(p);
  }
  const double r = 0.3;
  const auto cloud = cbps_sample(maps, controls, r);
  const auto expected = testsup::brute_cbps(maps, control_positions, r);
  REQUIRE(cloud.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i)
    CHECK((cloud.positions[i] - expected[i]).norm() == 0.0);
}

TEST_CASE("cbps_sample: serial and parallel agree exactly") {
  std::mt19937_64 rng(92);
  std::vector<Pointmap> maps{random_pointmap(rng, 0, 31, 17), random_pointmap(rng, 1, 13, 29)};
  std::vector<ControlPoint> controls;
  for (int c = 0; c < 30; ++c) controls.push_back(control_at(testsup::random_vec3(rng, -1.0, 1.0)));
  CHECK(same_cloud(cbps_sample(maps, controls, 0.4), cbps_sample_serial(maps, controls, 0.4)));
}

TEST_CASE("cbps_sample: colors come from the matching view's image, white otherwise") {
  Pointmap pm0;
  pm0.view = 0;
  pm0.width = 4;
  pm0.height = 3;
  Pointmap pm1 = pm0;
  pm1.view = 1;
  for (int n = 0; n < 12; ++n) {
    pm0.points.push_back(Vec3(n, 0, 0));
    pm0.valid.push_back(1);
    pm1.points.push_back(Vec3(n, 1, 0));
    pm1.valid.push_back(1);
  }
  Image image;
  image.view = 0;
  image.width = 4;
  image.height = 3;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 4; ++i)
      image.pixels.push_back(Rgb{static_cast<std::uint8_t>(i * 7), static_cast<std::uint8_t>(j * 11),
                                 static_cast<std::uint8_t>(i + j)});

  const auto cloud = cbps_sample({pm0, pm1}, {control_at(Vec3(5, 0.5, 0))}, 100.0, {image});
  REQUIRE(cloud.size() == 24);
  std::size_t n = 0;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 4; ++i, ++n) CHECK(cloud.colors[n] == image.at(i, j));
  for (; n < 24; ++n) CHECK(cloud.colors[n] == kWhite);
}

TEST_CASE("cbps_sample: input validation and the empty-control case") {
  std::mt19937_64 rng(93);
  const Pointmap pm = random_pointmap(rng, 0, 4, 4);
  CHECK(error_kind_of([&] { cbps_sample({pm}, {control_at(Vec3::Zero())}, -0.1); }) ==
        ErrorKind::invalid_input);

  Image wrong;
  wrong.view = 0;
  wrong.width = 5;
  wrong.height = 4;
  wrong.pixels.assign(20, kWhite);
  CHECK(error_kind_of([&] { cbps_sample({pm}, {control_at(Vec3::Zero())}, 1.0, {wrong}); }) ==
        ErrorKind::invalid_input);

  CHECK(cbps_sample({pm}, {}, 1.0).size() == 0);
}

TEST_CASE("merge_with_sfm: sfm points lead and sampled survivors follow") {
  PointCloud sfm = cloud_of({Vec3(0, 0, 0), Vec3(1, 0, 0)}, PointSource::sfm);
  PointCloud sampled = cloud_of({Vec3(0.04, 0, 0), Vec3(0.5, 0, 0), Vec3(1.04, 0, 0)},
                                PointSource::cbp);
  const auto merged = merge_with_sfm(sfm, sampled, 0.05);
  REQUIRE(merged.size() == 3);
  CHECK(merged.tags[0] == PointSource::sfm);
  CHECK(merged.tags[1] == PointSource::sfm);
  CHECK((merged.positions[2] - Vec3(0.5, 0, 0)).norm() == 0.0);
}

TEST_CASE("merge_with_sfm: a sampled point exactly at the margin is removed") {
  PointCloud sfm = cloud_of({Vec3(0.25, -0.5, 0.375)}, PointSource::sfm);
  PointCloud sampled = cloud_of({Vec3(0.25 + 0.75, -0.5, 0.375)}, PointSource::cbp);
  CHECK(merge_with_sfm(sfm, sampled, 0.75).size() == 1);
  CHECK(merge_with_sfm(sfm, sampled, 0.75 * (1.0 - 1e-12)).size() == 2);
}

TEST_CASE("merge_with_sfm: empty sfm passes everything through") {
  std::mt19937_64 rng(94);
  std::vector<Vec3> pts;
  for (int i = 0; i < 40; ++i) pts.push_back(testsup::random_vec3(rng, -1.0, 1.0));
  const auto merged = merge_with_sfm(PointCloud{}, cloud_of(pts, PointSource::cbp), 0.05);
  REQUIRE(merged.size() == pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK((merged.positions[i] - pts[i]).norm() == 0.0);
}

TEST_CASE("merge_with_sfm: equals the brute-force survivor set") {
  std::mt19937_64 rng(95);
  std::vector<Vec3> sfm_pts, sampled_pts;
  for (int i = 0; i < 50; ++i) sfm_pts.push_back(testsup::random_vec3(rng, -1.0, 1.0));
  for (int i = 0; i < 500; ++i) sampled_pts.push_back(testsup::random_vec3(rng, -1.0, 1.0));
  const double margin = 0.15;
  const auto merged =
      merge_with_sfm(cloud_of(sfm_pts, PointSource::sfm), cloud_of(sampled_pts, PointSource::cbp), margin);
  const auto survivors = testsup::brute_merge_survivors(sfm_pts, sampled_pts, margin);
  REQUIRE(merged.size() == sfm_pts.size() + survivors.size());
  for (std::size_t i = 0; i < survivors.size(); ++i)
    CHECK((merged.positions[sfm_pts.size() + i] - sampled_pts[survivors[i]]).norm() == 0.0);

  CHECK(error_kind_of([&] {
          merge_with_sfm(cloud_of(sfm_pts, PointSource::sfm), cloud_of(sampled_pts, PointSource::cbp), 0.0);
        }) == ErrorKind::invalid_input);
}

TEST_CASE("radius_cluster: widely separated points all survive in order") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.push_back(Vec3(2.0 * i, 0, 0));
  const auto out = radius_cluster(cloud_of(pts, PointSource::cbp), 0.5);
  REQUIRE(out.size() == pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK((out.positions[i] - pts[i]).norm() == 0.0);
}

TEST_CASE("radius_cluster: the boundary is inclusive, so a point at exactly the radius drops") {
  const Vec3 first(0.25, -0.5, 0.375);
  std::vector<Vec3> pts{first, first + Vec3(0.75, 0, 0), first + Vec3(0.75 * (1.0 + 1e-12), 0, 0)};
  const auto out = radius_cluster(cloud_of(pts, PointSource::cbp), 0.75);
  REQUIRE(out.size() == 2);
  CHECK((out.positions[0] - pts[0]).norm() == 0.0);
  CHECK((out.positions[1] - pts[2]).norm() == 0.0);
}

TEST_CASE("radius_cluster: equals the brute-force greedy pass") {
  std::mt19937_64 rng(96);
  std::vector<Vec3> pts;
  for (int i = 0; i < 300; ++i) pts.push_back(testsup::random_vec3(rng, -1.0, 1.0));
  const double radius = 0.25;
  const auto out = radius_cluster(cloud_of(pts, PointSource::cbp), radius);
  const auto kept = testsup::brute_greedy_cluster(pts, radius);
  REQUIRE(out.size() == kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i)
    CHECK((out.positions[i] - pts[kept[i]]).norm() == 0.0);

  CHECK(error_kind_of([&] { radius_cluster(cloud_of(pts, PointSource::cbp), 0.0); }) ==
        ErrorKind::invalid_input);
}

TEST_CASE("downsample: clouds under the cap come back unchanged") {
  std::mt19937_64 rng(97);
  std::vector<Vec3> pts;
  for (int i = 0; i < 100; ++i) pts.push_back(testsup::random_vec3(rng, -1.0, 1.0));
  const auto cloud = cloud_of(pts, PointSource::cbp);
  CHECK(same_cloud(downsample(cloud, 100, 7), cloud));
  CHECK(same_cloud(downsample(cloud, 5000, 7), cloud));
}

TEST_CASE("downsample: caps exactly, spares sfm points, preserves order") {
  PointCloud cloud;
  const std::size_t n_sfm = 100, n_cbp = 6000;
  for (std::size_t i = 0; i < n_sfm; ++i)
    cloud.push_back(Vec3(static_cast<double>(i), 0, 0), kWhite, PointSource::sfm);
  for (std::size_t i = 0; i < n_cbp; ++i)
    cloud.push_back(Vec3(static_cast<double>(n_sfm + i), 0, 0), kWhite, PointSource::cbp);

  const auto out = downsample(cloud, 3000, 11);
  REQUIRE(out.size() == 3000);
  std::size_t sfm_seen = 0;
  double last_x = -1.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.tags[i] == PointSource::sfm) ++sfm_seen;
    CHECK(out.positions[i].x() > last_x);  // input order preserved
    last_x = out.positions[i].x();
  }
  CHECK(sfm_seen == n_sfm);

  CHECK(same_cloud(out, downsample(cloud, 3000, 11)));
  CHECK_FALSE(same_cloud(out, downsample(cloud, 3000, 12)));
}

TEST_CASE("downsample: a cap below the sfm count keeps exactly the sfm points") {
  PointCloud cloud;
  for (int i = 0; i < 10; ++i) cloud.push_back(Vec3(i, 0, 0), kWhite, PointSource::sfm);
  for (int i = 0; i < 20; ++i) cloud.push_back(Vec3(100 + i, 0, 0), kWhite, PointSource::cbp);
  const auto out = downsample(cloud, 5, 3);
  REQUIRE(out.size() == 10);
  for (const auto tag : out.tags) CHECK(tag == PointSource::sfm);

  CHECK(error_kind_of([&] { downsample(cloud, 0, 3); }) == ErrorKind::invalid_input);
}

TEST_CASE("default_radius_fraction: eighth up to five views, sixteenth beyond") {
  CHECK(default_radius_fraction(2) == 1.0 / 8.0);
  CHECK(default_radius_fraction(3) == 1.0 / 8.0);
  CHECK(default_radius_fraction(5) == 1.0 / 8.0);
  CHECK(default_radius_fraction(6) == 1.0 / 16.0);
  CHECK(default_radius_fraction(12) == 1.0 / 16.0);
}

TEST_CASE("SamplingConfig and PointCloud validation") {
  SamplingConfig config;
  config.validate();  // defaults are fine
  config.radius_fraction = 0.0;
  config.validate();  // zero means "derive from view count"

  SamplingConfig bad = config;
  bad.margin = 0.0;
  CHECK(error_kind_of([&] { bad.validate(); }) == ErrorKind::invalid_input);
  bad = config;
  bad.cluster_radius = -1.0;
  CHECK(error_kind_of([&] { bad.validate(); }) == ErrorKind::invalid_input);
  bad = config;
  bad.radius_fraction = -0.5;
  CHECK(error_kind_of([&] { bad.validate(); }) == ErrorKind::invalid_input);
  bad = config;
  bad.max_points = 0;
  CHECK(error_kind_of([&] { bad.validate(); }) == ErrorKind::invalid_input);

  PointCloud mismatched;
  mismatched.positions.push_back(Vec3::Zero());
  CHECK(error_kind_of([&] { mismatched.validate(); }) == ErrorKind::invalid_input);
  PointCloud nan_cloud;
  nan_cloud.push_back(Vec3(0, 0, std::numeric_limits<double>::quiet_NaN()), kWhite, PointSource::cbp);
  CHECK(error_kind_of([&] { nan_cloud.validate(); }) == ErrorKind::invalid_input);
}
