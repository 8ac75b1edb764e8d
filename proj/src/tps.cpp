// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#include "warpinit/tps.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "warpinit/errors.hpp"

namespace warpinit {

namespace {

constexpr double kDedupDistance = 1e-9;
constexpr double kFallbackRidgeFactor = 1e-8;
constexpr double kResidualRelTol = 1e-8;  // LU backward error flagging rank deficiency

struct MergedControls {
  std::vector<Vec3> sources;
  std::vector<Vec3> targets;
};

// Groups sources within the dedup distance (union-find over all pairs, so the
// result does not depend on input order beyond index ties) and averages each
// group's targets. Group representative: lowest original index.
MergedControls merge_duplicates(const std::vector<ControlPair>& pairs) {
  const std::size_t n = pairs.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](std::size_t v) {
    while (parent[v] != v) {
      parent[v] = parent[parent[v]];
      v = parent[v];
    }
    return v;
  };
  const double sq_tol = kDedupDistance * kDedupDistance;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if ((pairs[i].source - pairs[j].source).squaredNorm() > sq_tol) continue;
      const std::size_t ri = find(i);
      const std::size_t rj = find(j);
      if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
    }

  MergedControls merged;
  std::vector<int> slot(n, -1);
  std::vector<double> count;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (slot[r] < 0) {
      slot[r] = static_cast<int>(merged.sources.size());
      merged.sources.push_back(pairs[r].source);
      merged.targets.push_back(Vec3::Zero());
      count.push_back(0.0);
    }
    merged.targets[static_cast<std::size_t>(slot[r])] += pairs[i].target;
    count[static_cast<std::size_t>(slot[r])] += 1.0;
  }
  for (std::size_t g = 0; g < merged.targets.size(); ++g) merged.targets[g] /= count[g];
  return merged;
}

struct SolveOutcome {
  bool ok = false;
  Eigen::MatrixXd solution;  // (M+4) x 3
};

SolveOutcome solve_system(const MergedControls& merged, double lambda) {
  const auto m = static_cast<Eigen::Index>(merged.sources.size());
  const Eigen::Index n = m + 4;
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Vec3& ci = merged.sources[static_cast<std::size_t>(i)];
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double u = (ci - merged.sources[static_cast<std::size_t>(j)]).norm();
      l(i, j) = u;
      l(j, i) = u;
    }
    l(i, i) = lambda;
    l(i, m) = 1.0;
    l(m, i) = 1.0;
    l.block<3, 1>(m + 1, i) = ci;
    l.block<1, 3>(i, m + 1) = ci.transpose();
  }

  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 3);
  for (Eigen::Index i = 0; i < m; ++i) rhs.row(i) = merged.targets[static_cast<std::size_t>(i)].transpose();

  SolveOutcome out;
  out.solution = Eigen::PartialPivLU<Eigen::MatrixXd>(l).solve(rhs);
  if (!out.solution.allFinite()) return out;
  const double residual = (l * out.solution - rhs).norm();
  out.ok = residual <= kResidualRelTol * std::max(1.0, rhs.norm());
  return out;
}

// Kernel accumulation shared by every evaluation path (scalar apply, serial
// and parallel pointmap loops) so all produce identical bits.
inline Vec3 evaluate_model(const TpsModel& model, const Vec3& x) {
  Vec3 y = model.t + model.A * x;
  for (std::size_t i = 0; i < model.centers.size(); ++i) {
    const double u = (x - model.centers[i]).norm();
    y.x() += model.W(static_cast<Eigen::Index>(i), 0) * u;
    y.y() += model.W(static_cast<Eigen::Index>(i), 1) * u;
    y.z() += model.W(static_cast<Eigen::Index>(i), 2) * u;
  }
  return y;
}

void deform_row(const TpsModel& model, const Pointmap& in, Pointmap& out, int j) {
  for (int i = 0; i < in.width; ++i) {
    const std::size_t idx = static_cast<std::size_t>(j) * static_cast<std::size_t>(in.width) +
                            static_cast<std::size_t>(i);
    out.points[idx] = in.valid[idx] != 0 ? evaluate_model(model, in.points[idx]) : in.points[idx];
  }
}

}  // namespace

TpsModel fit_tps(const std::vector<ControlPair>& pairs, double lambda, double fallback_scale) {
  if (lambda < 0.0) throw_invalid("negative TPS regularization");
  for (const auto& pair : pairs)
    if (!pair.source.allFinite() || !pair.target.allFinite())
      throw_invalid("non-finite control pair");

  const MergedControls merged = merge_duplicates(pairs);
  if (merged.sources.size() < 4)
    throw InsufficientControls("insufficient controls: TPS needs at least 4 distinct sources, got " +
                               std::to_string(merged.sources.size()));

  double used_lambda = lambda;
  SolveOutcome outcome = solve_system(merged, used_lambda);
  if (!outcome.ok) {
    used_lambda = std::max(lambda, kFallbackRidgeFactor * fallback_scale);
    outcome = solve_system(merged, used_lambda);
    if (!outcome.ok)
      throw_numeric("rank-deficient TPS system (coplanar or collinear sources)");
  }

  const auto m = static_cast<Eigen::Index>(merged.sources.size());
  TpsModel model;
  model.centers = merged.sources;
  model.W = outcome.solution.topRows(m);
  model.t = outcome.solution.row(m).transpose();
  model.A = outcome.solution.bottomRows(3).transpose();
  model.lambda = used_lambda;
  return model;
}

Vec3 apply_tps(const TpsModel& model, const Vec3& x) { return evaluate_model(model, x); }

Pointmap deform_pointmap(const TpsModel& model, const Pointmap& pointmap) {
  Pointmap out = pointmap;
#pragma omp parallel for schedule(static)
  for (int j = 0; j < pointmap.height; ++j) deform_row(model, pointmap, out, j);
  return out;
}

Pointmap deform_pointmap_serial(const TpsModel& model, const Pointmap& pointmap) {
  Pointmap out = pointmap;
  for (int j = 0; j < pointmap.height; ++j) deform_row(model, pointmap, out, j);
  return out;
}

std::vector<ControlPair> build_control_pairs(ViewId view, const std::vector<Track>& tracks,
                                             const std::vector<ControlPoint>& controls,
                                             const Pointmap& pointmap, std::size_t* skipped_invalid) {
  if (pointmap.view != view) throw_invalid("pointmap does not belong to the query view");
  std::size_t skipped = 0;
  std::vector<ControlPair> pairs;

  for (const auto& control : controls) {
    if (control.track_index >= tracks.size()) throw_invalid("control references missing track");
    const Track& track = tracks[control.track_index];
    const auto obs = track.observations.find(view);
    if (obs == track.observations.end()) continue;
    const Vec2 pixel = obs->second;

    if (pixel.x() < 0.0 || pixel.y() < 0.0 || pixel.x() > pointmap.width - 1 ||
        pixel.y() > pointmap.height - 1) {
      ++skipped;
      continue;
    }
    const int i0 = std::min(static_cast<int>(std::floor(pixel.x())), pointmap.width - 1);
    const int j0 = std::min(static_cast<int>(std::floor(pixel.y())), pointmap.height - 1);
    const double fx = pixel.x() - i0;
    const double fy = pixel.y() - j0;

    Vec3 acc = Vec3::Zero();
    double weight_sum = 0.0;
    for (int dj = 0; dj <= 1; ++dj)
      for (int di = 0; di <= 1; ++di) {
        const int i = i0 + di;
        const int j = j0 + dj;
        if (i >= pointmap.width || j >= pointmap.height) continue;
        const double w = (di == 0 ? 1.0 - fx : fx) * (dj == 0 ? 1.0 - fy : fy);
        if (w <= 0.0 || pointmap.valid_at(i, j) == 0) continue;
        acc += w * pointmap.at(i, j);
        weight_sum += w;
      }
    if (weight_sum <= 0.0) {
      ++skipped;
      continue;
    }

    ControlPair pair;
    pair.source = acc / weight_sum;
    pair.target = control.position;
    pair.pixel = pixel;
    pairs.push_back(pair);
  }

  if (skipped_invalid != nullptr) *skipped_invalid = skipped;
  if (pairs.empty())
    throw InsufficientControls("insufficient controls: no valid control pairs for view " +
                               std::to_string(view));
  return pairs;
}

}  // namespace warpinit
