// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "winbev/afn/ggit.hpp"
#include "winbev/numerics/layers.hpp"
#include "winbev/pointcloud/pointcloud.hpp"

namespace winbev {

enum class Plane { XZ, YZ, XY };

const char* plane_name(Plane p);

struct PlaneFeature {
  Plane plane = Plane::XY;
  Tensor feat;  // [A, B, C]; (A, B) = (x, z), (y, z) or (x, y) cells
};

struct GafResult {
  Tensor fused;        // [H, W, C]
  Tensor weights;      // [3] in (XZ, YZ, XY) order
  Tensor consistency;  // scalar

  std::array<double, 3> weight_values() const;
  double consistency_value() const;
};

struct AfnConfig {
  std::size_t c_enc = 32;
  std::size_t channels = 64;  // C of the BEV map
  GgitConfig ggit;
  std::size_t height_bands = 6;
  float init_alpha = 0.1f;  // trigonometric modulation
};

inline constexpr std::size_t kCellFeatureCount = 7;

/// Per-cell features (occupancy, density, reflectance, normalised z, offsets of
/// the cell mean inside the cell) reduced along the axis orthogonal to `plane`
/// with density weights. Returns [A, B, 7]; empty cells are zero.
Tensor plane_cell_features(const SparseVoxelGrid& grid, Plane plane);

/// Scales each location by 1 + (sin(alpha*a) + cos(alpha*b)) / 2, with (a, b)
/// the physical (z, x) for XZ and (z, y) for YZ cell centres. XY is returned as is.
PlaneFeature trig_modulate(const PlaneFeature& pf, const Tensor& alpha, const RoiBounds& roi,
                           const VoxelSize& voxel);

/// Three dilated 3x3 branches (1, 2, 4) with ReLU, a 1x1 fusion over their
/// concatenation, and the identity residual.
struct Denoiser {
  Conv2d branch1, branch2, branch4;
  Conv2d fusion;

  Denoiser() = default;
  Denoiser(ParamStore& store, const std::string& name, std::size_t channels, Initializer& init);
  Tensor operator()(const Tensor& x) const;
};

/// Variance-weighted fusion scaled by the mean pairwise cosine similarity of the
/// flattened inputs. `log_alpha` holds the log importance parameters.
GafResult gaf_fuse(const Tensor& f_xz, const Tensor& f_yz, const Tensor& f_xy, const Tensor& log_alpha);
// Throws ParameterError when any alpha is not positive.
GafResult gaf_fuse(const Tensor& f_xz, const Tensor& f_yz, const Tensor& f_xy, const std::array<double, 3>& alphas);

/// Band-weighted sinusoidal code of a normalised height, 2L values interleaved
/// as sin, cos per band.
std::vector<double> height_encode(double z, std::size_t bands = 6);

/// [H, W, 2L] encoding of each column's highest occupied cell; empty columns are zero.
Tensor height_stack(const SparseVoxelGrid& grid, std::size_t bands);

/// Brings a plane feature onto the [H, W] BEV grid. XZ and YZ are averaged over
/// z and broadcast along the missing horizontal axis.
Tensor resample_to_bev(const PlaneFeature& pf, std::size_t height, std::size_t width);

struct AfnOutput {
  Tensor bev;  // [H, W, C], layer-normalised per position
  GGITokens ggit;
  GafResult gaf;
};

class Afn {
 public:
  Afn() = default;
  Afn(ParamStore& store, const std::string& name, const AfnConfig& config, const RoiBounds& roi,
      const VoxelSize& voxel, Initializer& init);

  AfnOutput forward(const SparseVoxelGrid& grid) const;

  PlaneFeature project_plane(const SparseVoxelGrid& grid, Plane plane) const;
  Tensor to_bev(const GafResult& fused, const Tensor& heights) const;

  const AfnConfig& config() const { return config_; }
  const GgitGenerator& ggit() const { return ggit_; }

  struct PlaneBranch {
    Conv2d conv1, conv2;
    Tensor alpha;
    Denoiser denoise;
  };
  const PlaneBranch& branch(Plane p) const { return branches_[static_cast<int>(p)]; }
  const Linear& projection() const { return projection_; }
  const Tensor& log_alpha() const { return log_alpha_; }

 private:
  AfnConfig config_;
  RoiBounds roi_;
  VoxelSize voxel_;
  std::array<PlaneBranch, 3> branches_;
  Tensor log_alpha_;
  Linear projection_;
  GgitGenerator ggit_;
};

}  // namespace winbev
