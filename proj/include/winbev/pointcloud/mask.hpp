// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "winbev/pointcloud/pointcloud.hpp"

namespace winbev {

/// Binary raster in BEV coordinates. Row index runs along x, column along y.
struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> cells;

  Mask() = default;
  Mask(std::size_t r, std::size_t c) : rows(r), cols(c), cells(r * c, 0) {}

  bool at(std::size_t i, std::size_t j) const { return cells[i * cols + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v = true) { cells[i * cols + j] = v ? 1 : 0; }
  std::size_t area() const;
  bool empty() const { return area() == 0; }
  bool same_raster(const Mask& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const Mask&) const = default;
};

// Throws DimensionError on raster mismatch.
Mask mask_and(const Mask& a, const Mask& b);
Mask mask_or(const Mask& a, const Mask& b);

/// Maps metric x/y to the H x W BEV raster spanning the ROI.
struct BevRaster {
  RoiBounds roi;
  std::size_t height = 200;  // cells along x
  std::size_t width = 200;   // cells along y

  double cell_x() const { return (roi.x_max - roi.x_min) / static_cast<double>(height); }
  double cell_y() const { return (roi.y_max - roi.y_min) / static_cast<double>(width); }
  double cell_area() const { return cell_x() * cell_y(); }
  std::optional<std::pair<std::size_t, std::size_t>> cell_of(double x, double y) const;
  std::pair<double, double> cell_center(std::size_t i, std::size_t j) const;
};

}  // namespace winbev
