// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace winbev {

struct Point {
  float x = 0, y = 0, z = 0;
  float r = 0;  // reflectance in [0, 1]
};

struct PointCloud {
  std::vector<Point> points;
  std::string frame_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Axis-aligned region of interest in metres. Membership is strict on every side.
struct RoiBounds {
  double x_min = 0.0, x_max = 80.0;
  double y_min = -40.0, y_max = 40.0;
  double z_min = -3.0, z_max = 1.0;

  // Throws ConfigError unless min < max on every axis.
  void validate() const;
  bool contains(double x, double y, double z) const {
    return x_min < x && x < x_max && y_min < y && y < y_max && z_min < z && z < z_max;
  }
};

struct VoxelSize {
  double x = 0.4, y = 0.4, z = 0.2;
};

struct VoxelIndex {
  int i = 0, j = 0, k = 0;  // along x, y, z
  auto operator<=>(const VoxelIndex&) const = default;
};

struct CellStats {
  std::array<double, 3> mean{};  // mean x, y, z of member points
  std::size_t point_count = 0;
  double mean_reflectance = 0.0;
  double local_density = 0.0;  // point_count / max point_count in the grid
};

struct SparseVoxelGrid {
  RoiBounds roi;
  VoxelSize voxel;
  std::map<VoxelIndex, CellStats> cells;

  // Number of cells spanned by the ROI along each axis.
  std::array<int, 3> extent() const;
  std::size_t total_points() const;
  bool empty() const { return cells.empty(); }
};

struct FrameReadResult {
  PointCloud cloud;
  std::size_t rejected = 0;  // records dropped for non-finite values
};

// Packed little-endian float32 x, y, z, r per 16-byte record.
FrameReadResult load_frame(const std::filesystem::path& path);
void save_frame(const std::filesystem::path& path, const PointCloud& cloud);

PointCloud roi_filter(const PointCloud& pc, const RoiBounds& bounds);

// Input must already be ROI-filtered. Cell index is floor((coord - min) / size).
SparseVoxelGrid voxelize(const PointCloud& pc, const RoiBounds& bounds, const VoxelSize& voxel);

}  // namespace winbev
