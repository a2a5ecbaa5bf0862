// SPDX-License-Identifier: Apache-2.0
#include "winbev/afn/ggit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>

#include "winbev/errors.hpp"
#include "winbev/numerics/ops.hpp"

namespace winbev {

namespace {

std::array<double, 3> normalised_xyz(const CellStats& c, const RoiBounds& roi) {
  return {(c.mean[0] - roi.x_min) / (roi.x_max - roi.x_min), (c.mean[1] - roi.y_min) / (roi.y_max - roi.y_min),
          (c.mean[2] - roi.z_min) / (roi.z_max - roi.z_min)};
}

}  // namespace

GroundPlane fit_ground_plane(const SparseVoxelGrid& grid) {
  GroundPlane plane;
  plane.d = grid.roi.z_min;
  if (grid.empty()) return plane;

  std::vector<std::array<double, 3>> pts;
  std::pair<int, int> last{std::numeric_limits<int>::min(), 0};
  double z_min = std::numeric_limits<double>::infinity();
  for (const auto& [idx, cell] : grid.cells) {
    z_min = std::min(z_min, cell.mean[2]);
    // Cells iterate in (i, j, k) order, so the first per column is the lowest.
    if (std::pair{idx.i, idx.j} == last) continue;
    last = {idx.i, idx.j};
    pts.push_back({cell.mean[0], cell.mean[1], cell.mean[2]});
  }
  plane.d = z_min;

  const double n = static_cast<double>(pts.size());
  double mx = 0, my = 0, mz = 0;
  for (const auto& p : pts) {
    mx += p[0];
    my += p[1];
    mz += p[2];
  }
  mx /= n;
  my /= n;
  mz /= n;
  double sxx = 0, sxy = 0, syy = 0, sxz = 0, syz = 0;
  for (const auto& p : pts) {
    const double dx = p[0] - mx, dy = p[1] - my, dz = p[2] - mz;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
    sxz += dx * dz;
    syz += dy * dz;
  }
  const double det = sxx * syy - sxy * sxy;
  if (pts.size() < 3 || det <= 1e-9 * std::max(1.0, sxx * syy)) return plane;

  const double p = (sxz * syy - syz * sxy) / det;
  const double q = (syz * sxx - sxz * sxy) / det;
  const double r = mz - p * mx - q * my;
  const double norm = std::sqrt(p * p + q * q + 1.0);
  plane.a = -p / norm;
  plane.b = -q / norm;
  plane.c = 1.0 / norm;
  plane.d = r / norm;
  std::size_t inliers = 0;
  for (const auto& pt : pts) {
    const double dist = plane.a * pt[0] + plane.b * pt[1] + plane.c * pt[2] - plane.d;
    if (std::abs(dist) < kPlaneInlierDistance) ++inliers;
  }
  plane.inlier_ratio = static_cast<double>(inliers) / n;
  return plane;
}

std::vector<float> ggit_context(const SparseVoxelGrid& grid, std::size_t peaks) {
  std::vector<float> ctx(kGlobalContext + cluster_context_size(peaks) + kStructureContext, 0.0f);
  if (grid.empty()) return ctx;
  const RoiBounds& roi = grid.roi;

  // Global moments of x, y, z, r over cells, weighted by point count.
  std::array<double, 4> sum{}, sq{}, lo, hi;
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  double total = 0;
  for (const auto& [_, cell] : grid.cells) {
    const auto xyz = normalised_xyz(cell, roi);
    const std::array<double, 4> v{xyz[0], xyz[1], xyz[2], cell.mean_reflectance};
    const double w = static_cast<double>(cell.point_count);
    total += w;
    for (int a = 0; a < 4; ++a) {
      sum[a] += w * v[a];
      sq[a] += w * v[a] * v[a];
      lo[a] = std::min(lo[a], v[a]);
      hi[a] = std::max(hi[a], v[a]);
    }
  }
  for (int a = 0; a < 4; ++a) {
    const double mean = sum[a] / total;
    const double var = std::max(0.0, sq[a] / total - mean * mean);
    ctx[4 * a + 0] = static_cast<float>(mean);
    ctx[4 * a + 1] = static_cast<float>(std::sqrt(var));
    ctx[4 * a + 2] = static_cast<float>(lo[a]);
    ctx[4 * a + 3] = static_cast<float>(hi[a]);
  }

  // Density peaks; ties keep index order.
  std::vector<const CellStats*> cells;
  cells.reserve(grid.cells.size());
  for (const auto& [_, cell] : grid.cells) cells.push_back(&cell);
  std::stable_sort(cells.begin(), cells.end(),
                   [](const CellStats* a, const CellStats* b) { return a->local_density > b->local_density; });
  for (std::size_t j = 0; j < peaks && j < cells.size(); ++j) {
    const auto xyz = normalised_xyz(*cells[j], roi);
    const std::size_t base = kGlobalContext + 4 * j;
    ctx[base + 0] = static_cast<float>(xyz[0]);
    ctx[base + 1] = static_cast<float>(xyz[1]);
    ctx[base + 2] = static_cast<float>(xyz[2]);
    ctx[base + 3] = static_cast<float>(cells[j]->local_density);
  }

  const auto plane = fit_ground_plane(grid);
  const std::size_t base = kGlobalContext + cluster_context_size(peaks);
  ctx[base + 0] = static_cast<float>(plane.a);
  ctx[base + 1] = static_cast<float>(plane.b);
  ctx[base + 2] = static_cast<float>(plane.c);
  ctx[base + 3] = static_cast<float>((plane.d - roi.z_min) / (roi.z_max - roi.z_min));
  ctx[base + 4] = static_cast<float>(plane.inlier_ratio);
  return ctx;
}

GgitGenerator::GgitGenerator(ParamStore& store, const std::string& name, const GgitConfig& config,
                             Initializer& init)
    : config_(config) {
  if (config.tokens == 0 || config.width == 0) throw ConfigError("GGIT needs at least one token and channel");
  embeddings_ = store.add(name + ".embeddings",
                          Tensor::parameter({config.tokens, config.width},
                                            init.normal(config.tokens * config.width, 0.5f)));
  const std::array<std::size_t, 3> inputs{kGlobalContext, cluster_context_size(config.peaks), kStructureContext};
  const char* groups[3] = {"global", "cluster", "structure"};
  for (std::size_t g = 0; g < 3; ++g) {
    group_sizes_[g] = config.tokens / 3 + (g < config.tokens % 3 ? 1 : 0);
    if (group_sizes_[g] == 0 || inputs[g] == 0) continue;
    updates_[g] = Linear(store, name + ".delta_" + groups[g], inputs[g], group_sizes_[g] * config.width, init, false);
  }
}

GGITokens GgitGenerator::operator()(const SparseVoxelGrid& grid) const {
  return from_context(ggit_context(grid, config_.peaks));
}

GGITokens GgitGenerator::from_context(const std::vector<float>& context) const {
  const std::array<std::size_t, 3> inputs{kGlobalContext, cluster_context_size(config_.peaks), kStructureContext};
  if (context.size() != inputs[0] + inputs[1] + inputs[2]) {
    throw DimensionError("GGIT context has " + std::to_string(context.size()) + " values");
  }
  GGITokens out;
  std::vector<Tensor> deltas;
  std::size_t offset = 0;
  for (std::size_t g = 0; g < 3; ++g) {
    const std::size_t n = group_sizes_[g];
    for (std::size_t t = 0; t < n; ++t) out.provenance.push_back(static_cast<TokenGroup>(g));
    if (n == 0) {
      offset += inputs[g];
      continue;
    }
    if (inputs[g] == 0) {
      deltas.push_back(Tensor::zeros({n * config_.width}));
      continue;
    }
    std::vector<float> slice(context.begin() + static_cast<std::ptrdiff_t>(offset),
                             context.begin() + static_cast<std::ptrdiff_t>(offset + inputs[g]));
    offset += inputs[g];
    auto delta = updates_[g](Tensor::constant({1, inputs[g]}, std::move(slice)));
    deltas.push_back(ops::reshape(delta, {n * config_.width}));
  }
  auto flat = ops::concat_last(deltas);
  out.tokens = ops::add(embeddings_, ops::reshape(flat, {config_.tokens, config_.width}));
  return out;
}

}  // namespace winbev
