// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace winbev {

struct Assignment {
  // (prediction, ground truth), ordered by ground-truth index.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> unmatched_predictions;  // ascending
  double cost = 0;
};

/// Row-major cost matrix, rows are predictions and columns ground truths.
struct CostMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Minimum-cost assignment of every ground truth to a distinct prediction.
/// Among optimal assignments the one whose prediction sequence (in ground-truth
/// order) is lexicographically smallest is returned. Throws CapacityError when
/// there are fewer predictions than ground truths, EvaluationError on
/// non-finite costs.
Assignment hungarian(const CostMatrix& cost);

}  // namespace winbev
