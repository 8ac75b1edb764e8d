// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "warpinit/io.hpp"
#include "warpinit/triangulate.hpp"

namespace warpinit {

// Fixed stage set of the timing report, in execution order. io aggregates
// input loading and final export.
extern const std::vector<std::string> kStageNames;  // correspondences, triangulation, tps, cbps, io

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct PipelineSummary {
  std::size_t n_matches = 0;
  std::size_t n_matches_rejected = 0;   // out-of-bounds lines in the match file
  std::size_t n_matches_filtered = 0;   // dropped by key-view filtering
  std::size_t n_tracks = 0;
  double score = 0.0;                   // fraction of tracks seen by >= 3 views
  TriangulationStats triangulation;
  std::map<ViewId, std::size_t> pairs_per_view;  // fitted views only
  std::vector<ViewId> skipped_views;
  double scene_scale = 0.0;
  double sampling_radius = 0.0;
  std::size_t n_sampled = 0;
  std::size_t n_merged = 0;
  std::size_t n_clustered = 0;
  std::size_t n_final = 0;
  std::vector<StageTiming> timings;     // exactly kStageNames, in order
};

// Full run: correspondences -> triangulation -> per-view spline fit and
// warp -> sampling/merge/cluster/downsample -> PLY export. Deterministic for
// a fixed manifest; insufficient-control views are skipped with a warning.
PipelineSummary run_init(const JobManifest& manifest);

// One stage in isolation, reading upstream artifacts from work_dir and
// writing this stage's artifact ("tracks", "triangulate", "tps", "cbps").
// Chaining the four stages reproduces run_init's output byte-for-byte.
PipelineSummary run_stage(const std::string& stage, const JobManifest& manifest);

// Multi-view score of the manifest's matches after key-view filtering.
double run_score(const JobManifest& manifest);

void print_summary(const PipelineSummary& summary, std::ostream& out);

}  // namespace warpinit
