// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#include "warpinit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "warpinit/cbps.hpp"
#include "warpinit/errors.hpp"
#include "warpinit/log.hpp"
#include "warpinit/tps.hpp"

namespace warpinit {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string> kStageNames{"correspondences", "triangulation", "tps", "cbps", "io"};

namespace {

class StageClock {
 public:
  template <typename F>
  auto timed(const std::string& stage, F&& fn) {
    const auto start = std::chrono::steady_clock::now();
    auto finish = [&] {
      acc_[stage] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    try {
      if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
        fn();
        finish();
      } else {
        auto result = fn();
        finish();
        return result;
      }
    } catch (const Error& e) {
      finish();
      throw Error(e.kind(), "stage " + stage + ": " + std::string(e.what()));
    }
  }

  std::vector<StageTiming> report() const {
    std::vector<StageTiming> timings;
    for (const auto& name : kStageNames) {
      const auto it = acc_.find(name);
      timings.push_back({name, it == acc_.end() ? 0.0 : it->second});
    }
    return timings;
  }

 private:
  std::map<std::string, double> acc_;
};

int effective_k(const JobManifest& manifest, std::size_t n_views) {
  const int base = manifest.k ? *manifest.k : (n_views == 3 ? 2 : 4);
  return std::clamp(base, 1, static_cast<int>(n_views) - 1);
}

struct FilteredMatches {
  std::vector<PairwiseMatch> kept;
  std::size_t dropped = 0;
};

// A match survives when either endpoint lies in the other's key-view set.
FilteredMatches filter_by_key_views(const std::vector<PairwiseMatch>& matches,
                                    const std::vector<Camera>& cameras, int k) {
  std::map<ViewId, std::set<ViewId>> keys;
  for (const auto& camera : cameras) {
    const auto neighborhood = select_key_views(cameras, camera.id, k);
    keys[camera.id] = std::set<ViewId>(neighborhood.key_views.begin(), neighborhood.key_views.end());
  }
  FilteredMatches out;
  for (const auto& match : matches) {
    if (keys[match.view_a].count(match.view_b) != 0 || keys[match.view_b].count(match.view_a) != 0)
      out.kept.push_back(match);
    else
      ++out.dropped;
  }
  return out;
}

struct Inputs {
  std::vector<Camera> cameras;
  CameraLookup lookup;
  std::map<ViewId, DepthMap> depths;
  std::vector<Image> images;
  PointCloud sfm;
  MatchReadResult matches;
};

Inputs load_cameras_only(const JobManifest& manifest) {
  Inputs in;
  in.cameras = manifest.load_cameras();
  if (in.cameras.size() < 2) throw_invalid("pipeline needs at least 2 views");
  for (const auto& camera : in.cameras) in.lookup.emplace(camera.id, camera);
  return in;
}

void load_depths(const JobManifest& manifest, Inputs& in) {
  for (const auto& [view, path] : manifest.depths) {
    DepthMap depth = read_depth_any(path);
    depth.view = view;
    const Camera& camera = in.lookup.at(view);
    if (depth.width != camera.width || depth.height != camera.height)
      throw_invalid("depth map " + path.string() + " does not match camera " +
                    std::to_string(view) + " dimensions");
    in.depths.emplace(view, std::move(depth));
  }
}

void load_images(const JobManifest& manifest, Inputs& in) {
  for (const auto& [view, path] : manifest.images) {
    Image image = read_image_ppm(path);
    image.view = view;
    const Camera& camera = in.lookup.at(view);
    if (image.width != camera.width || image.height != camera.height)
      throw_invalid("image " + path.string() + " does not match camera " + std::to_string(view) +
                    " dimensions");
    in.images.push_back(std::move(image));
  }
}

void load_sfm(const JobManifest& manifest, Inputs& in) {
  if (manifest.sfm_cloud.empty()) return;
  in.sfm = read_ply(manifest.sfm_cloud);
}

void load_matches(const JobManifest& manifest, Inputs& in) {
  in.matches = read_matches(manifest.matches, in.lookup);
}

std::vector<Track> correspondences_stage(const Inputs& in, const JobManifest& manifest,
                                         PipelineSummary& summary) {
  const int k = effective_k(manifest, in.cameras.size());
  const FilteredMatches filtered = filter_by_key_views(in.matches.matches, in.cameras, k);
  summary.n_matches = in.matches.matches.size();
  summary.n_matches_rejected = in.matches.rejected_out_of_bounds;
  summary.n_matches_filtered = filtered.dropped;
  std::vector<Track> tracks = build_tracks(filtered.kept);
  summary.n_tracks = tracks.size();
  summary.score = multiview_score(tracks);
  return tracks;
}

struct ViewModels {
  std::map<ViewId, TpsModel> models;  // fitted views, ascending
  std::map<ViewId, std::size_t> pairs_per_view;
  std::vector<ViewId> skipped;
};

ViewModels fit_view_models(const Inputs& in, const std::vector<Track>& tracks,
                           const std::vector<ControlPoint>& controls, double lambda,
                           double scale) {
  ViewModels out;
  for (const auto& camera : in.cameras) {
    const Pointmap pointmap = backproject_depthmap(camera, in.depths.at(camera.id));
    try {
      const auto pairs = build_control_pairs(camera.id, tracks, controls, pointmap);
      out.models[camera.id] = fit_tps(pairs, lambda, scale);
      out.pairs_per_view[camera.id] = pairs.size();
    } catch (const InsufficientControls& e) {
      log::warn("skipping view " + std::to_string(camera.id) + ": " + e.what());
      out.skipped.push_back(camera.id);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numeric) throw;
      log::warn("skipping view " + std::to_string(camera.id) + ": " + e.what());
      out.skipped.push_back(camera.id);
    }
  }
  return out;
}

// Sampling radius, merge, clustering and the final cap; shared by run_init
// and the isolated cbps stage so both assemble identical clouds.
PointCloud assemble_cloud(const Inputs& in, const std::vector<Pointmap>& cbp,
                          const std::vector<ControlPoint>& controls, const JobManifest& manifest,
                          PipelineSummary& summary) {
  const SceneScale scale = scene_scale(in.cameras);
  const double fraction = manifest.sampling.radius_fraction > 0.0
                              ? manifest.sampling.radius_fraction
                              : default_radius_fraction(in.cameras.size());
  const double radius = fraction * scale.radius;
  summary.scene_scale = scale.radius;
  summary.sampling_radius = radius;

  const PointCloud sampled = cbps_sample(cbp, controls, radius, in.images);
  summary.n_sampled = sampled.size();
  const PointCloud merged = merge_with_sfm(in.sfm, sampled, manifest.sampling.margin);
  summary.n_merged = merged.size();
  const PointCloud clustered = radius_cluster(merged, manifest.sampling.cluster_radius);
  summary.n_clustered = clustered.size();
  PointCloud final_cloud = downsample(clustered, manifest.sampling.max_points, manifest.seed);
  summary.n_final = final_cloud.size();
  return final_cloud;
}

void ensure_parent_dir(const fs::path& file) {
  const fs::path parent = file.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw_io("cannot create " + parent.string() + ": " + ec.message());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw_io("cannot create " + dir.string() + ": " + ec.message());
}

fs::path upstream_artifact(const JobManifest& manifest, const std::string& name,
                           const std::string& producer) {
  const fs::path path = manifest.work_dir / name;
  if (!fs::exists(path))
    throw_invalid("missing upstream artifact " + path.string() + "; run the '" + producer +
                  "' stage first");
  return path;
}

void write_models(const ViewModels& models, const JobManifest& manifest) {
  ensure_dir(manifest.work_dir);
  json files = json::object();
  json views = json::array();
  json skipped = json::array();
  for (const auto& [view, model] : models.models) {
    const std::string name = "tps_" + std::to_string(view) + ".tps3";
    write_tps3(model, manifest.work_dir / name);
    files[std::to_string(view)] = name;
    views.push_back(view);
  }
  for (const ViewId view : models.skipped) skipped.push_back(view);
  const json index{{"views", views}, {"skipped", skipped}, {"files", files}};
  std::ofstream out(manifest.work_dir / "models.json");
  if (!out) throw_io("cannot write " + (manifest.work_dir / "models.json").string());
  out << index.dump(2) << "\n";
  out.flush();
  if (!out.good()) throw_io("write failed for " + (manifest.work_dir / "models.json").string());
}

ViewModels read_models(const JobManifest& manifest) {
  const fs::path index_path = upstream_artifact(manifest, "models.json", "tps");
  const std::string text = [&] {
    std::ifstream in(index_path);
    if (!in) throw_io("cannot open " + index_path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
  }();
  json index = json::parse(text, nullptr, false);
  if (index.is_discarded()) throw_format("invalid JSON in " + index_path.string());

  ViewModels models;
  try {
    for (const auto& view : index.at("skipped")) models.skipped.push_back(view.get<ViewId>());
    for (const auto& view : index.at("views")) {
      const ViewId id = view.get<ViewId>();
      const std::string name = index.at("files").at(std::to_string(id)).get<std::string>();
      models.models[id] = read_tps3(manifest.work_dir / name);
    }
  } catch (const json::exception& e) {
    throw_format(index_path.string() + ": malformed model index: " + e.what());
  }
  return models;
}

}  // namespace

PipelineSummary run_init(const JobManifest& manifest) {
  PipelineSummary summary;
  StageClock clock;

  Inputs in = clock.timed("io", [&] {
    Inputs loaded = load_cameras_only(manifest);
    load_depths(manifest, loaded);
    load_images(manifest, loaded);
    load_sfm(manifest, loaded);
    load_matches(manifest, loaded);
    return loaded;
  });

  const std::vector<Track> tracks =
      clock.timed("correspondences", [&] { return correspondences_stage(in, manifest, summary); });

  const TriangulationResult tri = clock.timed("triangulation", [&] {
    return triangulate_all(tracks, in.lookup, manifest.max_reproj_px);
  });
  summary.triangulation = tri.stats;

  struct TpsOutput {
    ViewModels models;
    std::vector<Pointmap> cbp;
  };
  const TpsOutput warped = clock.timed("tps", [&] {
    TpsOutput out;
    const double scale = scene_scale(in.cameras).radius;
    for (const auto& camera : in.cameras) {
      const Pointmap pointmap = backproject_depthmap(camera, in.depths.at(camera.id));
      try {
        const auto pairs = build_control_pairs(camera.id, tracks, tri.controls, pointmap);
        TpsModel model = fit_tps(pairs, manifest.lambda, scale);
        out.cbp.push_back(deform_pointmap(model, pointmap));
        out.models.pairs_per_view[camera.id] = pairs.size();
        out.models.models[camera.id] = std::move(model);
      } catch (const InsufficientControls& e) {
        log::warn("skipping view " + std::to_string(camera.id) + ": " + e.what());
        out.models.skipped.push_back(camera.id);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric) throw;
        log::warn("skipping view " + std::to_string(camera.id) + ": " + e.what());
        out.models.skipped.push_back(camera.id);
      }
    }
    return out;
  });
  summary.pairs_per_view = warped.models.pairs_per_view;
  summary.skipped_views = warped.models.skipped;

  const PointCloud final_cloud = clock.timed(
      "cbps", [&] { return assemble_cloud(in, warped.cbp, tri.controls, manifest, summary); });

  clock.timed("io", [&] {
    ensure_parent_dir(manifest.output);
    write_ply(final_cloud, manifest.output);
  });

  summary.timings = clock.report();
  return summary;
}

PipelineSummary run_stage(const std::string& stage, const JobManifest& manifest) {
  PipelineSummary summary;
  StageClock clock;

  if (stage == "tracks") {
    Inputs in = clock.timed("io", [&] {
      Inputs loaded = load_cameras_only(manifest);
      load_matches(manifest, loaded);
      return loaded;
    });
    const auto tracks =
        clock.timed("correspondences", [&] { return correspondences_stage(in, manifest, summary); });
    clock.timed("io", [&] {
      ensure_dir(manifest.work_dir);
      write_tracks_json(tracks, manifest.work_dir / "tracks.json");
    });
  } else if (stage == "triangulate") {
    Inputs in = clock.timed("io", [&] { return load_cameras_only(manifest); });
    const auto tracks = clock.timed("io", [&] {
      return read_tracks_json(upstream_artifact(manifest, "tracks.json", "tracks"));
    });
    const auto tri = clock.timed("triangulation", [&] {
      return triangulate_all(tracks, in.lookup, manifest.max_reproj_px);
    });
    summary.triangulation = tri.stats;
    summary.n_tracks = tracks.size();
    clock.timed("io", [&] {
      ensure_dir(manifest.work_dir);
      write_controls_json(tri, manifest.work_dir / "controls.json");
    });
  } else if (stage == "tps") {
    Inputs in = clock.timed("io", [&] {
      Inputs loaded = load_cameras_only(manifest);
      load_depths(manifest, loaded);
      return loaded;
    });
    const auto tracks = clock.timed("io", [&] {
      return read_tracks_json(upstream_artifact(manifest, "tracks.json", "tracks"));
    });
    const auto tri = clock.timed("io", [&] {
      return read_controls_json(upstream_artifact(manifest, "controls.json", "triangulate"));
    });
    const auto models = clock.timed("tps", [&] {
      const double scale = scene_scale(in.cameras).radius;
      return fit_view_models(in, tracks, tri.controls, manifest.lambda, scale);
    });
    summary.pairs_per_view = models.pairs_per_view;
    summary.skipped_views = models.skipped;
    clock.timed("io", [&] { write_models(models, manifest); });
  } else if (stage == "cbps") {
    Inputs in = clock.timed("io", [&] {
      Inputs loaded = load_cameras_only(manifest);
      load_depths(manifest, loaded);
      load_images(manifest, loaded);
      load_sfm(manifest, loaded);
      return loaded;
    });
    const auto tri = clock.timed("io", [&] {
      return read_controls_json(upstream_artifact(manifest, "controls.json", "triangulate"));
    });
    const auto models = clock.timed("io", [&] { return read_models(manifest); });
    summary.skipped_views = models.skipped;
    const auto cbp = clock.timed("tps", [&] {
      std::vector<Pointmap> out;
      for (const auto& [view, model] : models.models) {
        const Pointmap pointmap = backproject_depthmap(in.lookup.at(view), in.depths.at(view));
        out.push_back(deform_pointmap(model, pointmap));
      }
      return out;
    });
    const auto final_cloud = clock.timed(
        "cbps", [&] { return assemble_cloud(in, cbp, tri.controls, manifest, summary); });
    clock.timed("io", [&] {
      ensure_parent_dir(manifest.output);
      write_ply(final_cloud, manifest.output);
    });
  } else {
    throw_invalid("unknown stage '" + stage + "' (expected tracks, triangulate, tps or cbps)");
  }

  summary.timings = clock.report();
  return summary;
}

double run_score(const JobManifest& manifest) {
  Inputs in = load_cameras_only(manifest);
  load_matches(manifest, in);
  PipelineSummary summary;
  const auto tracks = correspondences_stage(in, manifest, summary);
  return multiview_score(tracks);
}

void print_summary(const PipelineSummary& summary, std::ostream& out) {
  out << "matches:        " << summary.n_matches << " kept ("
      << summary.n_matches_rejected << " out of bounds, " << summary.n_matches_filtered
      << " outside key views)\n";
  out << "tracks:         " << summary.n_tracks << " (multi-view score "
      << summary.score << ")\n";
  out << "controls:       " << summary.triangulation.accepted << " accepted, "
      << summary.triangulation.rejected_degenerate << " degenerate, "
      << summary.triangulation.rejected_cheirality << " behind camera, "
      << summary.triangulation.rejected_reprojection << " high reprojection\n";
  out << "pairs per view:";
  if (summary.pairs_per_view.empty()) out << " none";
  for (const auto& [view, count] : summary.pairs_per_view) out << " " << view << ":" << count;
  out << "\n";
  out << "skipped views: ";
  if (summary.skipped_views.empty()) out << " none";
  for (const ViewId view : summary.skipped_views) out << " " << view;
  out << "\n";
  out << "scene scale:    " << summary.scene_scale << " (sampling radius " << summary.sampling_radius
      << ")\n";
  out << "points:         " << summary.n_sampled << " sampled -> " << summary.n_merged
      << " merged -> " << summary.n_clustered << " clustered -> " << summary.n_final << " final\n";

  out << "\nstage            seconds\n";
  double total = 0.0;
  for (const auto& timing : summary.timings) {
    out << timing.stage;
    for (std::size_t pad = timing.stage.size(); pad < 17; ++pad) out << ' ';
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.3f", timing.seconds);
    out << buffer << "\n";
    total += timing.seconds;
  }
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.3f", total);
  out << "total            " << buffer << "\n";
}

}  // namespace warpinit
