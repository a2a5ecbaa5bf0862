// SPDX-License-Identifier: Apache-2.0
#include "winbev/pointcloud/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "winbev/errors.hpp"

namespace winbev {

std::size_t Mask::area() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

namespace {
template <typename Op>
Mask combine(const Mask& a, const Mask& b, Op op) {
  if (!a.same_raster(b)) {
    throw DimensionError("mask rasters differ: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                         " vs " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
  }
  Mask out(a.rows, a.cols);
  for (std::size_t i = 0; i < out.cells.size(); ++i) out.cells[i] = op(a.cells[i], b.cells[i]) ? 1 : 0;
  return out;
}
}  // namespace

Mask mask_and(const Mask& a, const Mask& b) {
  return combine(a, b, [](auto x, auto y) { return x && y; });
}

Mask mask_or(const Mask& a, const Mask& b) {
  return combine(a, b, [](auto x, auto y) { return x || y; });
}

std::optional<std::pair<std::size_t, std::size_t>> BevRaster::cell_of(double x, double y) const {
  const double fi = std::floor((x - roi.x_min) / cell_x());
  const double fj = std::floor((y - roi.y_min) / cell_y());
  if (fi < 0 || fj < 0 || fi >= static_cast<double>(height) || fj >= static_cast<double>(width)) {
    return std::nullopt;
  }
  return std::pair{static_cast<std::size_t>(fi), static_cast<std::size_t>(fj)};
}

std::pair<double, double> BevRaster::cell_center(std::size_t i, std::size_t j) const {
  return {roi.x_min + (static_cast<double>(i) + 0.5) * cell_x(),
          roi.y_min + (static_cast<double>(j) + 0.5) * cell_y()};
}

}  // namespace winbev
