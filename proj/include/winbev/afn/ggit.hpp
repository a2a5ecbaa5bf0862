// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "winbev/numerics/layers.hpp"
#include "winbev/pointcloud/pointcloud.hpp"

namespace winbev {

enum class TokenGroup { Global, Cluster, Structure };

struct GGITokens {
  Tensor tokens;  // [T, C_tok]
  std::vector<TokenGroup> provenance;
};

struct GgitConfig {
  std::size_t tokens = 8;
  std::size_t width = 64;  // C_tok
  std::size_t peaks = 4;   // J density peaks
};

// Ground plane a x + b y + c z = d with unit normal and c >= 0.
struct GroundPlane {
  double a = 0, b = 0, c = 1, d = 0;
  double inlier_ratio = 0;
};

inline constexpr double kPlaneInlierDistance = 0.25;

/// Least-squares fit of z = p x + q y + r over the lowest occupied cell of each
/// column. Degenerate layouts fall back to z = z_min with inlier ratio 0.
GroundPlane fit_ground_plane(const SparseVoxelGrid& grid);

inline constexpr std::size_t kGlobalContext = 16;
inline constexpr std::size_t kStructureContext = 5;
inline std::size_t cluster_context_size(std::size_t peaks) { return 4 * peaks; }

/// Scene context in [global | cluster | structure] order. Coordinates are
/// normalised to the ROI. An empty grid yields all zeros.
std::vector<float> ggit_context(const SparseVoxelGrid& grid, std::size_t peaks);

/// Learned token embeddings plus bias-free per-group linear updates. Each token
/// belongs to one group and only reads that group's slice of the context.
class GgitGenerator {
 public:
  GgitGenerator() = default;
  GgitGenerator(ParamStore& store, const std::string& name, const GgitConfig& config, Initializer& init);

  GGITokens operator()(const SparseVoxelGrid& grid) const;
  GGITokens from_context(const std::vector<float>& context) const;

  const GgitConfig& config() const { return config_; }
  const Tensor& embeddings() const { return embeddings_; }

 private:
  GgitConfig config_;
  Tensor embeddings_;
  std::array<std::size_t, 3> group_sizes_{};
  std::array<Linear, 3> updates_;
};

}  // namespace winbev
