// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "warpinit/errors.hpp"
#include "warpinit/io.hpp"
#include "warpinit/log.hpp"
#include "warpinit/pipeline.hpp"
#include "warpinit/synth.hpp"

namespace {

// Flag values that override manifest keys when set on the command line.
struct Overrides {
  std::optional<double> radius_fraction;
  std::optional<double> margin;
  std::optional<double> cluster_radius;
  std::optional<std::size_t> max_points;
  std::optional<double> max_reproj_px;
  std::optional<int> k;
  std::optional<double> lambda;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
};

void add_override_flags(CLI::App* cmd, Overrides& overrides) {
  cmd->add_option("--radius-fraction", overrides.radius_fraction,
                  "Sampling radius as a fraction of the scene scale");
  cmd->add_option("--margin", overrides.margin, "Removal margin around sfm points (scene units)");
  cmd->add_option("--cluster-radius", overrides.cluster_radius,
                  "Greedy thinning radius (scene units)");
  cmd->add_option("--max-points", overrides.max_points, "Final point count cap");
  cmd->add_option("--max-reproj", overrides.max_reproj_px,
                  "Mean reprojection error threshold (pixels)");
  cmd->add_option("--k", overrides.k, "Key views per query view");
  cmd->add_option("--lambda", overrides.lambda, "Spline regularization weight");
  cmd->add_option("--seed", overrides.seed, "Seed for all randomized steps");
  cmd->add_option("--output", overrides.output, "Output PLY path");
}

warpinit::JobManifest load_with_overrides(const std::string& manifest_path, const Overrides& o) {
  warpinit::JobManifest manifest = warpinit::load_manifest(manifest_path);
  if (o.radius_fraction) manifest.sampling.radius_fraction = *o.radius_fraction;
  if (o.margin) manifest.sampling.margin = *o.margin;
  if (o.cluster_radius) manifest.sampling.cluster_radius = *o.cluster_radius;
  if (o.max_points) manifest.sampling.max_points = *o.max_points;
  if (o.max_reproj_px) manifest.max_reproj_px = *o.max_reproj_px;
  if (o.k) manifest.k = *o.k;
  if (o.lambda) manifest.lambda = *o.lambda;
  if (o.seed) manifest.seed = *o.seed;
  if (o.output) manifest.output = std::filesystem::path(*o.output);
  manifest.sampling.validate();
  return manifest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense point-cloud initialization from sparse views: warps monocular-depth "
               "backprojections onto triangulated multi-view geometry and samples the result"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("--quiet", quiet, "Suppress warnings and progress notes");

  std::string manifest_path;
  Overrides overrides;

  auto* init = app.add_subcommand("init", "Run the full pipeline and write the output PLY");
  init->add_option("--manifest", manifest_path, "Job manifest (JSON)")->required();
  add_override_flags(init, overrides);

  const char* stage_blurbs[4][2] = {{"tracks", "Build tracks from pairwise matches"},
                                    {"triangulate", "Triangulate tracks into control points"},
                                    {"tps", "Fit per-view deformations"},
                                    {"cbps", "Sample, merge, thin and export the cloud"}};
  std::vector<CLI::App*> stage_cmds;
  for (const auto& blurb : stage_blurbs) {
    auto* cmd = app.add_subcommand(blurb[0], blurb[1]);
    cmd->add_option("--manifest", manifest_path, "Job manifest (JSON)")->required();
    add_override_flags(cmd, overrides);
    stage_cmds.push_back(cmd);
  }

  auto* score = app.add_subcommand("score", "Print the multi-view score of the matches");
  score->add_option("--manifest", manifest_path, "Job manifest (JSON)")->required();
  score->add_option("--k", overrides.k, "Key views per query view");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene with a job manifest");
  std::string synth_dir;
  std::string surface_name = "plane";
  warpinit::SceneSpec spec;
  synth->add_option("--out", synth_dir, "Output directory")->required();
  synth->add_option("--surface", surface_name, "plane, sphere or heightfield");
  synth->add_option("--views", spec.n_views, "Number of cameras");
  synth->add_option("--width", spec.width, "Image width (pixels)");
  synth->add_option("--height", spec.height, "Image height (pixels)");
  synth->add_option("--corruption", spec.corruption, "Depth corruption amplitude (0 = exact)");
  synth->add_option("--match-fraction", spec.match_fraction,
                    "Fraction of pixels emitted as match queries");
  synth->add_option("--sfm-points", spec.sfm_points, "Sparse cloud size");
  synth->add_option("--sphere-radius", spec.sphere_radius,
                    "Sphere surface radius (cameras orbit at radius 5)");
  synth->add_option("--arc-span", spec.arc_span_deg, "Camera arc azimuth sweep (degrees)");
  synth->add_option("--seed", spec.seed, "Generation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  warpinit::log::verbose() = !quiet;

  try {
    if (init->parsed()) {
      const auto manifest = load_with_overrides(manifest_path, overrides);
      const auto summary = warpinit::run_init(manifest);
      warpinit::print_summary(summary, std::cout);
      std::cout << "wrote " << manifest.output.string() << "\n";
      return 0;
    }
    for (auto* cmd : stage_cmds) {
      if (!cmd->parsed()) continue;
      const auto manifest = load_with_overrides(manifest_path, overrides);
      const auto summary = warpinit::run_stage(cmd->get_name(), manifest);
      warpinit::print_summary(summary, std::cout);
      return 0;
    }
    if (score->parsed()) {
      warpinit::JobManifest manifest = warpinit::load_manifest(manifest_path);
      if (overrides.k) manifest.k = *overrides.k;
      std::cout << warpinit::run_score(manifest) << "\n";
      return 0;
    }
    if (synth->parsed()) {
      spec.kind = warpinit::surface_kind_from_string(surface_name);
      const auto scene = warpinit::generate_scene(spec);
      const auto manifest = warpinit::write_scene(scene, synth_dir);
      std::cout << "wrote " << manifest.string() << " (" << scene.matches.size() << " matches, "
                << scene.sfm_cloud.size() << " sfm points)\n";
      return 0;
    }
  } catch (const warpinit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
