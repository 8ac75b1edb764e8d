// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#include "warpinit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <tuple>

#include "warpinit/errors.hpp"
#include "warpinit/io.hpp"
#include "warpinit/random.hpp"
#include "warpinit/tracks.hpp"

namespace warpinit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;
constexpr double kRingRadius = 5.0;
constexpr double kMinHitDepth = 1e-9;
constexpr double kMarchStep = 0.02;
constexpr double kMarchMaxDepth = 20.0;
constexpr int kBisectIterations = 60;
// Absorbs the float32 depth quantization when comparing a backprojected point
// against a fresh ray cast; occlusion gaps are orders of magnitude larger.
constexpr double kVisibilityTol = 1e-4;

Camera make_camera(ViewId id, const Vec3& center, const Vec3& target, int width, int height) {
  Vec3 forward = (target - center).normalized();
  Vec3 up(0.0, 0.0, 1.0);
  if (std::abs(forward.dot(up)) > 0.999) up = Vec3(0.0, 1.0, 0.0);
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);

  Camera camera;
  camera.id = id;
  camera.R.row(0) = right.transpose();
  camera.R.row(1) = down.transpose();
  camera.R.row(2) = forward.transpose();
  camera.t = -camera.R * center;
  camera.width = width;
  camera.height = height;
  const double focal = 1.2 * std::max(width, height);
  camera.K << focal, 0.0, 0.5 * (width - 1), 0.0, focal, 0.5 * (height - 1), 0.0, 0.0, 1.0;
  camera.validate();
  return camera;
}

// World point of a pixel at a given depth, written with the exact expression
// the pointmap backprojection uses so synthetic truth and pipeline output
// agree bit-for-bit.
Vec3 world_of(const Camera& camera, const Mat3& k_inv, const Mat3& r_t, const Vec2& pixel,
              double depth) {
  const Vec3 cam_point = k_inv * Vec3(pixel.x(), pixel.y(), 1.0) * depth;
  return r_t * (cam_point - camera.t);
}

// The volatile store pins the narrowing conversion: gcc's vectorizer can
// otherwise elide the float round trip at -O3, leaving full-precision values.
double quantize_f32(double v) {
  volatile float narrowed = static_cast<float>(v);
  return static_cast<double>(narrowed);
}

// Two low-frequency cosine modes over normalized pixel coordinates, peak
// amplitude 1.
struct SmoothField {
  std::array<double, 2> coeff{};
  std::array<double, 2> freq_u{};
  std::array<double, 2> freq_v{};
  std::array<double, 2> phase{};

  static SmoothField draw(std::mt19937_64& rng) {
    SmoothField field;
    for (int k = 0; k < 2; ++k) {
      field.coeff[k] = uniform_real(rng, 0.4, 1.0);
      field.freq_u[k] = uniform_real(rng, 0.3, 1.2);
      field.freq_v[k] = uniform_real(rng, 0.3, 1.2);
      field.phase[k] = uniform_real(rng, 0.0, 2.0 * 3.14159265358979323846);
    }
    return field;
  }

  double at(double u, double v) const {
    const double two_pi = 2.0 * 3.14159265358979323846;
    double value = 0.0;
    double norm = 0.0;
    for (int k = 0; k < 2; ++k) {
      value += coeff[k] * std::cos(two_pi * (freq_u[k] * u + freq_v[k] * v) + phase[k]);
      norm += coeff[k];
    }
    return value / norm;
  }
};

Rgb procedural_color(ViewId view, int i, int j, int width) {
  std::uint64_t h = static_cast<std::uint64_t>(view) * 0x9E3779B97F4A7C15ull +
                    (static_cast<std::uint64_t>(j) * static_cast<std::uint64_t>(width) +
                     static_cast<std::uint64_t>(i)) *
                        0xBF58476D1CE4E5B9ull +
                    0x94D049BB133111EBull;
  h ^= h >> 31;
  h *= 0xBF58476D1CE4E5B9ull;
  h ^= h >> 27;
  h *= 0x94D049BB133111EBull;
  h ^= h >> 31;
  return Rgb{static_cast<std::uint8_t>(h & 0xff), static_cast<std::uint8_t>((h >> 8) & 0xff),
             static_cast<std::uint8_t>((h >> 16) & 0xff)};
}

}  // namespace

SurfaceKind surface_kind_from_string(const std::string& name) {
  if (name == "plane") return SurfaceKind::plane;
  if (name == "sphere") return SurfaceKind::sphere;
  if (name == "heightfield") return SurfaceKind::heightfield;
  throw_invalid("unknown surface kind '" + name + "'");
}

std::string to_string(SurfaceKind kind) {
  switch (kind) {
    case SurfaceKind::plane: return "plane";
    case SurfaceKind::sphere: return "sphere";
    case SurfaceKind::heightfield: return "heightfield";
  }
  return "?";
}

double Surface::height_at(double x, double y) const {
  double h = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double along = std::cos(hf_direction[k]) * x + std::sin(hf_direction[k]) * y;
    h += hf_amplitude[k] * std::cos(hf_omega[k] * along + hf_phase[k]);
  }
  return h;
}

double Surface::distance_to(const Vec3& point) const {
  switch (kind) {
    case SurfaceKind::plane:
      return std::abs(plane_normal.normalized().dot(point - plane_point));
    case SurfaceKind::sphere:
      return std::abs((point - sphere_center).norm() - sphere_radius);
    case SurfaceKind::heightfield:
      return std::abs(point.z() - height_at(point.x(), point.y()));
  }
  return 0.0;
}

std::optional<double> first_hit_depth(const Camera& camera, const Surface& surface,
                                      const Vec2& pixel) {
  const Vec3 dir = camera.R.transpose() * (camera.K.inverse() * Vec3(pixel.x(), pixel.y(), 1.0));
  const Vec3 origin = camera.center();

  switch (surface.kind) {
    case SurfaceKind::plane: {
      const Vec3 n = surface.plane_normal;
      const double denom = n.dot(dir);
      if (std::abs(denom) < 1e-12) return std::nullopt;
      const double d = n.dot(surface.plane_point - origin) / denom;
      if (d <= kMinHitDepth) return std::nullopt;
      return d;
    }
    case SurfaceKind::sphere: {
      const Vec3 oc = origin - surface.sphere_center;
      const double a = dir.squaredNorm();
      const double b = 2.0 * oc.dot(dir);
      const double c = oc.squaredNorm() - surface.sphere_radius * surface.sphere_radius;
      const double disc = b * b - 4.0 * a * c;
      if (disc < 0.0) return std::nullopt;
      const double sq = std::sqrt(disc);
      const double d1 = (-b - sq) / (2.0 * a);
      const double d2 = (-b + sq) / (2.0 * a);
      if (d1 > kMinHitDepth) return d1;
      if (d2 > kMinHitDepth) return d2;
      return std::nullopt;
    }
    case SurfaceKind::heightfield: {
      auto above = [&](double d) {
        const Vec3 p = origin + d * dir;
        return p.z() - surface.height_at(p.x(), p.y());
      };
      double lo = 1e-3;
      if (above(lo) <= 0.0) return std::nullopt;  // camera at or below the surface
      for (double hi = lo + kMarchStep; hi <= kMarchMaxDepth; hi += kMarchStep) {
        if (above(hi) > 0.0) {
          lo = hi;
          continue;
        }
        double a = lo;
        double b = hi;
        for (int it = 0; it < kBisectIterations; ++it) {
          const double mid = 0.5 * (a + b);
          (above(mid) > 0.0 ? a : b) = mid;
        }
        return 0.5 * (a + b);
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

SyntheticScene generate_scene(const SceneSpec& spec) {
  if (spec.n_views < 2) throw_invalid("synthetic scene needs at least 2 views");
  if (spec.width < 8 || spec.height < 8) throw_invalid("synthetic resolution must be at least 8x8");
  if (!(spec.corruption >= 0.0) || spec.corruption > 0.8)
    throw_invalid("corruption amplitude must be in [0, 0.8]");
  if (!(spec.match_fraction > 0.0) || spec.match_fraction > 1.0)
    throw_invalid("match fraction must be in (0, 1]");
  if (spec.sfm_points < 0) throw_invalid("sfm point count must be non-negative");
  if (!(spec.sphere_radius > 0.0) || spec.sphere_radius > 0.9 * kRingRadius)
    throw_invalid("sphere radius must be in (0, " + std::to_string(0.9 * kRingRadius) +
                  "] so cameras stay outside the surface");
  if (!(spec.arc_span_deg >= 1.0) || spec.arc_span_deg > 160.0)
    throw_invalid("camera arc span must be in [1, 160] degrees");

  SyntheticScene scene;
  scene.spec = spec;
  scene.surface.kind = spec.kind;
  scene.surface.sphere_radius = spec.sphere_radius;
  std::mt19937_64 rng(spec.seed);

  if (spec.kind == SurfaceKind::heightfield) {
    for (int k = 0; k < 3; ++k) {
      scene.surface.hf_amplitude[k] = uniform_real(rng, 0.05, 0.12);
      scene.surface.hf_omega[k] = uniform_real(rng, 0.4, 0.9);
      scene.surface.hf_direction[k] = uniform_real(rng, 0.0, 2.0 * 3.14159265358979323846);
      scene.surface.hf_phase[k] = uniform_real(rng, 0.0, 2.0 * 3.14159265358979323846);
    }
  }

  // Cameras on an arc above the surface, all aimed at the origin. The layout
  // is a pure function of the view index so camera geometry does not shift
  // with seed or corruption settings. The elevation jitter scales with the
  // sweep so narrow arcs keep neighboring frustums overlapping.
  for (int v = 0; v < spec.n_views; ++v) {
    const double azimuth =
        spec.n_views == 1
            ? 0.0
            : (-0.5 + static_cast<double>(v) / (spec.n_views - 1)) * spec.arc_span_deg * kDeg;
    const double elevation =
        (30.0 + 8.0 * (spec.arc_span_deg / 80.0) * std::sin(1.7 * v + 0.5)) * kDeg;
    const Vec3 center = kRingRadius * Vec3(std::cos(elevation) * std::cos(azimuth),
                                           std::cos(elevation) * std::sin(azimuth),
                                           std::sin(elevation));
    scene.cameras.push_back(make_camera(v, center, Vec3::Zero(), spec.width, spec.height));
  }

  // True depths: float32-quantized first hits, matching what a PFM round trip
  // preserves; 0 marks rays that miss the surface.
  std::vector<std::vector<std::size_t>> valid_pixels(scene.cameras.size());
  for (std::size_t v = 0; v < scene.cameras.size(); ++v) {
    const Camera& camera = scene.cameras[v];
    DepthMap depth;
    depth.view = camera.id;
    depth.width = spec.width;
    depth.height = spec.height;
    depth.values.assign(static_cast<std::size_t>(spec.width) * spec.height, 0.0);
    for (int j = 0; j < spec.height; ++j)
      for (int i = 0; i < spec.width; ++i) {
        const auto hit = first_hit_depth(camera, scene.surface, Vec2(i, j));
        if (!hit) continue;
        depth.at(i, j) = quantize_f32(*hit);
        valid_pixels[v].push_back(static_cast<std::size_t>(j) * spec.width + i);
      }
    if (valid_pixels[v].empty())
      throw_invalid("surface not visible from view " + std::to_string(camera.id));
    scene.true_depths.push_back(std::move(depth));
  }

  // Corruption d' = d * (1 + amp * M(i,j)) + 0.5 * amp * O(i,j); exact
  // identity at amp = 0.
  for (std::size_t v = 0; v < scene.cameras.size(); ++v) {
    const SmoothField mult_field = SmoothField::draw(rng);
    const SmoothField add_field = SmoothField::draw(rng);
    CorruptionField record;
    record.width = spec.width;
    record.height = spec.height;
    record.mult.assign(scene.true_depths[v].values.size(), 1.0);
    record.add.assign(scene.true_depths[v].values.size(), 0.0);

    DepthMap corrupted = scene.true_depths[v];
    for (int j = 0; j < spec.height; ++j)
      for (int i = 0; i < spec.width; ++i) {
        const double u = spec.width > 1 ? static_cast<double>(i) / (spec.width - 1) : 0.0;
        const double w = spec.height > 1 ? static_cast<double>(j) / (spec.height - 1) : 0.0;
        const double m = 1.0 + spec.corruption * mult_field.at(u, w);
        const double o = 0.5 * spec.corruption * add_field.at(u, w);
        const std::size_t idx = static_cast<std::size_t>(j) * spec.width + i;
        record.mult[idx] = m;
        record.add[idx] = o;
        const double d = scene.true_depths[v].values[idx];
        if (!depth_valid(d)) continue;
        const double bent = quantize_f32(d * m + o);
        corrupted.values[idx] = depth_valid(bent) ? bent : 0.0;
      }
    scene.corruption.push_back(std::move(record));
    scene.corrupted_depths.push_back(std::move(corrupted));
  }

  for (const Camera& camera : scene.cameras) {
    Image image;
    image.view = camera.id;
    image.width = spec.width;
    image.height = spec.height;
    image.pixels.resize(static_cast<std::size_t>(spec.width) * spec.height);
    for (int j = 0; j < spec.height; ++j)
      for (int i = 0; i < spec.width; ++i)
        image.at(i, j) = procedural_color(camera.id, i, j, spec.width);
    scene.images.push_back(std::move(image));
  }

  // Query pixels per view: a seeded uniform choice among valid pixels.
  std::vector<std::vector<std::size_t>> queries(scene.cameras.size());
  const auto target_count = static_cast<std::size_t>(std::llround(
      spec.match_fraction * static_cast<double>(spec.width) * static_cast<double>(spec.height)));
  for (std::size_t v = 0; v < scene.cameras.size(); ++v) {
    auto pool = valid_pixels[v];
    const std::size_t n_q = std::clamp<std::size_t>(target_count, 1, pool.size());
    for (std::size_t i = 0; i < n_q; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(bounded_draw(rng, pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    queries[v].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_q));
    std::sort(queries[v].begin(), queries[v].end());
  }

  // Matches: project each query's true point into its key views. A projection
  // is emitted only when the point is the first hit there (not occluded) and
  // its 1-pixel grid cell is still free, so distinct surface points never
  // share a track cell downstream.
  std::map<std::tuple<ViewId, long, long>, std::size_t> claimed;
  std::size_t point_id = 0;
  std::vector<std::vector<std::size_t>> query_ids(scene.cameras.size());
  for (std::size_t v = 0; v < scene.cameras.size(); ++v)
    for (const std::size_t pix : queries[v]) {
      const long i = static_cast<long>(pix % static_cast<std::size_t>(spec.width));
      const long j = static_cast<long>(pix / static_cast<std::size_t>(spec.width));
      claimed[{scene.cameras[v].id, i, j}] = point_id;
      query_ids[v].push_back(point_id);
      ++point_id;
    }

  const int k_gen = std::min(spec.n_views - 1, 4);
  std::vector<Mat3> k_inv(scene.cameras.size());
  std::vector<Mat3> r_t(scene.cameras.size());
  for (std::size_t v = 0; v < scene.cameras.size(); ++v) {
    k_inv[v] = scene.cameras[v].K.inverse();
    r_t[v] = scene.cameras[v].R.transpose();
  }

  for (std::size_t v = 0; v < scene.cameras.size(); ++v) {
    const Camera& cam_a = scene.cameras[v];
    const auto neighborhood = select_key_views(scene.cameras, cam_a.id, k_gen);
    for (std::size_t qi = 0; qi < queries[v].size(); ++qi) {
      const std::size_t pix = queries[v][qi];
      const int i = static_cast<int>(pix % static_cast<std::size_t>(spec.width));
      const int j = static_cast<int>(pix / static_cast<std::size_t>(spec.width));
      const double d = scene.true_depths[v].values[pix];
      const Vec3 x = world_of(cam_a, k_inv[v], r_t[v], Vec2(i, j), d);
      const std::size_t id = query_ids[v][qi];

      for (const ViewId target : neighborhood.key_views) {
        const auto w = static_cast<std::size_t>(target);  // view ids are 0..n-1 here
        const Camera& cam_b = scene.cameras[w];
        const auto projected = project(cam_b, x);
        if (!projected) continue;
        const Vec2 p = *projected;
        if (p.x() < 0.0 || p.y() < 0.0 || p.x() > spec.width - 1 || p.y() > spec.height - 1)
          continue;
        const auto hit = first_hit_depth(cam_b, scene.surface, p);
        if (!hit) continue;
        const double depth_b = cam_b.depth_of(x);
        if (std::abs(*hit - depth_b) > kVisibilityTol * (1.0 + depth_b)) continue;  // occluded

        const std::tuple<ViewId, long, long> cell{cam_b.id, static_cast<long>(std::floor(p.x())),
                                                  static_cast<long>(std::floor(p.y()))};
        const auto claim = claimed.emplace(cell, id);
        if (!claim.second) continue;  // cell already observes another point

        PairwiseMatch match;
        match.view_a = cam_a.id;
        match.view_b = cam_b.id;
        match.pixel_a = Vec2(i, j);
        match.pixel_b = p;
        scene.matches.push_back(match);
      }
    }
  }

  // Sparse cloud: seeded true-surface samples with the observing view's color.
  for (int s = 0; s < spec.sfm_points; ++s) {
    const auto v = static_cast<std::size_t>(bounded_draw(rng, scene.cameras.size()));
    const std::size_t pix =
        valid_pixels[v][static_cast<std::size_t>(bounded_draw(rng, valid_pixels[v].size()))];
    const int i = static_cast<int>(pix % static_cast<std::size_t>(spec.width));
    const int j = static_cast<int>(pix / static_cast<std::size_t>(spec.width));
    const Vec3 x = world_of(scene.cameras[v], k_inv[v], r_t[v], Vec2(i, j),
                            scene.true_depths[v].values[pix]);
    scene.sfm_cloud.push_back(x, scene.images[v].at(i, j), PointSource::sfm);
  }

  return scene;
}

RecoveryReport evaluate_recovery(const SyntheticScene& scene, const PointCloud& cloud) {
  if (cloud.size() == 0) throw_invalid("cannot evaluate an empty point cloud");
  RecoveryReport report;
  report.n_points = cloud.size();
  double sq_sum = 0.0;
  for (const auto& p : cloud.positions) {
    const double dist = scene.surface.distance_to(p);
    sq_sum += dist * dist;
    report.max_dist = std::max(report.max_dist, dist);
  }
  report.rms = std::sqrt(sq_sum / static_cast<double>(cloud.size()));
  return report;
}

fs::path write_scene(const SyntheticScene& scene, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw_io("cannot create " + dir.string() + ": " + ec.message());

  write_cameras_json(scene.cameras, dir / "cameras.json");
  json depths = json::object();
  json images = json::object();
  for (std::size_t v = 0; v < scene.cameras.size(); ++v) {
    const std::string id = std::to_string(scene.cameras[v].id);
    const std::string depth_name = "depth_" + id + ".pfm";
    const std::string image_name = "image_" + id + ".ppm";
    write_depth_pfm(scene.corrupted_depths[v], dir / depth_name);
    write_image_ppm(scene.images[v], dir / image_name);
    depths[id] = depth_name;
    images[id] = image_name;
  }
  write_matches(scene.matches, dir / "matches.txt");
  write_ply(scene.sfm_cloud, dir / "sfm.ply");

  const json manifest{{"cameras_json", "cameras.json"}, {"depths", depths},
                      {"images", images},               {"matches", "matches.txt"},
                      {"sfm_cloud", "sfm.ply"},         {"output", "init.ply"},
                      {"work_dir", "work"},             {"seed", scene.spec.seed}};
  const fs::path manifest_path = dir / "manifest.json";
  std::ofstream out(manifest_path);
  if (!out) throw_io("cannot write " + manifest_path.string());
  out << manifest.dump(2) << "\n";
  out.flush();
  if (!out.good()) throw_io("write failed for " + manifest_path.string());
  return manifest_path;
}

}  // namespace warpinit
