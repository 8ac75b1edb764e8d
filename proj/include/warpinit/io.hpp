// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "warpinit/cbps.hpp"
#include "warpinit/geometry.hpp"
#include "warpinit/image.hpp"
#include "warpinit/tps.hpp"
#include "warpinit/tracks.hpp"
#include "warpinit/triangulate.hpp"

namespace warpinit {

// Cameras ----------------------------------------------------------------

// COLMAP text model (cameras.txt + images.txt), PINHOLE and SIMPLE_PINHOLE
// only. COLMAP places pixel centers at half-integer coordinates; principal
// points are shifted by -0.5 into this library's integer-center convention.
std::vector<Camera> read_colmap_cameras(const std::filesystem::path& cameras_text,
                                        const std::filesystem::path& images_text);

std::vector<Camera> read_cameras_json(const std::filesystem::path& path);
void write_cameras_json(const std::vector<Camera>& cameras, const std::filesystem::path& path);

// Depth maps --------------------------------------------------------------

// PFM "Pf" grayscale: rows stored bottom-to-top, byte order by scale sign.
DepthMap read_depth_pfm(const std::filesystem::path& path);
void write_depth_pfm(const DepthMap& depth, const std::filesystem::path& path);

// Raw grid: magic "DMAP", u32 width, u32 height, then width*height f32
// row-major top-to-bottom, everything little-endian.
DepthMap read_depth_raw(const std::filesystem::path& path);
void write_depth_raw(const DepthMap& depth, const std::filesystem::path& path);

// Dispatches on the file's magic bytes ("Pf" or "DMAP").
DepthMap read_depth_any(const std::filesystem::path& path);

// Matches -----------------------------------------------------------------

struct MatchReadResult {
  std::vector<PairwiseMatch> matches;
  std::size_t rejected_out_of_bounds = 0;
};

// Text lines "view_a view_b xa ya xb yb [confidence]"; '#' starts a comment.
// Pixels outside [0, W-1] x [0, H-1] of their view are dropped and counted.
MatchReadResult read_matches(const std::filesystem::path& path, const CameraLookup& cameras);
void write_matches(const std::vector<PairwiseMatch>& matches, const std::filesystem::path& path);

// Images ------------------------------------------------------------------

// Binary PPM (P6), maxval 255.
Image read_image_ppm(const std::filesystem::path& path);
void write_image_ppm(const Image& image, const std::filesystem::path& path);

// Point clouds ------------------------------------------------------------

// Binary little-endian PLY with float x,y,z and uchar red,green,blue.
// Reading tolerates extra scalar vertex properties (skipped) and missing
// colors (white), and tags loaded points as sfm; writing always emits the
// six-property layout.
PointCloud read_ply(const std::filesystem::path& path);
void write_ply(const PointCloud& cloud, const std::filesystem::path& path);

// Deterministic header for size accounting: write_ply emits exactly these
// bytes before the 15-byte-per-vertex payload.
std::string ply_header(std::size_t vertex_count);

// Stage artifacts ----------------------------------------------------------

void write_tracks_json(const std::vector<Track>& tracks, const std::filesystem::path& path);
std::vector<Track> read_tracks_json(const std::filesystem::path& path);

void write_controls_json(const TriangulationResult& result, const std::filesystem::path& path);
TriangulationResult read_controls_json(const std::filesystem::path& path);

// TPS model dump: magic "TPS3", u32 version (1), u32 M, f64 lambda, then
// t (3), A (9, row-major), centers (3M), W (3M, row-major) as LE f64.
void write_tps3(const TpsModel& model, const std::filesystem::path& path);
TpsModel read_tps3(const std::filesystem::path& path);

// Job manifest --------------------------------------------------------------

struct JobManifest {
  // Inputs; relative entries are resolved against the manifest's directory.
  std::filesystem::path cameras_json;    // exclusive with the colmap pair
  std::filesystem::path colmap_cameras;
  std::filesystem::path colmap_images;
  std::map<ViewId, std::filesystem::path> depths;
  std::map<ViewId, std::filesystem::path> images;  // optional per view
  std::filesystem::path matches;
  std::filesystem::path sfm_cloud;       // optional
  std::filesystem::path output;          // final PLY
  std::filesystem::path work_dir;        // stage artifacts

  SamplingConfig sampling;               // radius_fraction 0 = derive from view count
  double max_reproj_px = 2.0;
  std::optional<int> k;                  // key views per query; default by view count
  double lambda = 0.0;
  std::uint64_t seed = 0;

  std::vector<Camera> load_cameras() const;
};

// Parses the JSON manifest and checks that every referenced input exists and
// that depth view ids exactly match camera view ids.
JobManifest load_manifest(const std::filesystem::path& path);

}  // namespace warpinit
