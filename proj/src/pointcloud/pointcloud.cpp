// SPDX-License-Identifier: Apache-2.0
#include "winbev/pointcloud/pointcloud.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "winbev/errors.hpp"

namespace winbev {

namespace {

float read_le_float(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

void write_le_float(std::ostream& os, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
  os.write(bytes, 4);
}

}  // namespace

void RoiBounds::validate() const {
  if (!(x_min < x_max) || !(y_min < y_max) || !(z_min < z_max)) {
    throw ConfigError("ROI bounds need min < max on every axis");
  }
}

std::array<int, 3> SparseVoxelGrid::extent() const {
  return {static_cast<int>(std::lround((roi.x_max - roi.x_min) / voxel.x)),
          static_cast<int>(std::lround((roi.y_max - roi.y_min) / voxel.y)),
          static_cast<int>(std::lround((roi.z_max - roi.z_min) / voxel.z))};
}

std::size_t SparseVoxelGrid::total_points() const {
  std::size_t n = 0;
  for (const auto& [_, c] : cells) n += c.point_count;
  return n;
}

FrameReadResult load_frame(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open frame file " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 16 != 0) {
    throw FormatError("frame file " + path.string() + " is truncated: " + std::to_string(bytes.size()) +
                          " bytes is not a multiple of 16",
                      bytes.size() - bytes.size() % 16);
  }
  FrameReadResult result;
  result.cloud.frame_id = path.stem().string();
  result.cloud.points.reserve(bytes.size() / 16);
  for (std::size_t off = 0; off < bytes.size(); off += 16) {
    Point p{read_le_float(&bytes[off]), read_le_float(&bytes[off + 4]), read_le_float(&bytes[off + 8]),
            read_le_float(&bytes[off + 12])};
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) || !std::isfinite(p.r)) {
      ++result.rejected;
      continue;
    }
    p.r = std::clamp(p.r, 0.0f, 1.0f);
    result.cloud.points.push_back(p);
  }
  return result;
}

void save_frame(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write frame file " + path.string());
  for (const auto& p : cloud.points) {
    write_le_float(out, p.x);
    write_le_float(out, p.y);
    write_le_float(out, p.z);
    write_le_float(out, p.r);
  }
  if (!out) throw IoError("failed writing frame file " + path.string());
}

PointCloud roi_filter(const PointCloud& pc, const RoiBounds& bounds) {
  PointCloud out;
  out.frame_id = pc.frame_id;
  std::copy_if(pc.points.begin(), pc.points.end(), std::back_inserter(out.points),
               [&](const Point& p) { return bounds.contains(p.x, p.y, p.z); });
  return out;
}

SparseVoxelGrid voxelize(const PointCloud& pc, const RoiBounds& bounds, const VoxelSize& voxel) {
  SparseVoxelGrid grid;
  grid.roi = bounds;
  grid.voxel = voxel;

  struct Sum {
    double x = 0, y = 0, z = 0, r = 0;
    std::size_t n = 0;
  };
  std::map<VoxelIndex, Sum> sums;
  for (const auto& p : pc.points) {
    const VoxelIndex idx{static_cast<int>(std::floor((p.x - bounds.x_min) / voxel.x)),
                         static_cast<int>(std::floor((p.y - bounds.y_min) / voxel.y)),
                         static_cast<int>(std::floor((p.z - bounds.z_min) / voxel.z))};
    auto& s = sums[idx];
    s.x += p.x;
    s.y += p.y;
    s.z += p.z;
    s.r += p.r;
    ++s.n;
  }
  std::size_t max_count = 0;
  for (const auto& [_, s] : sums) max_count = std::max(max_count, s.n);
  for (const auto& [idx, s] : sums) {
    const double n = static_cast<double>(s.n);
    grid.cells.emplace(idx, CellStats{{s.x / n, s.y / n, s.z / n},
                                      s.n,
                                      s.r / n,
                                      n / static_cast<double>(max_count)});
  }
  return grid;
}

}  // namespace winbev
