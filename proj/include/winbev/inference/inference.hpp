// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "winbev/decoder/decoder.hpp"
#include "winbev/pointcloud/mask.hpp"

namespace winbev {

struct DetectedInstance {
  int class_id = 0;
  double score = 0;  // max real-class probability
  Mask binary_mask;  // sigmoid(logit) > 0.5
  std::size_t query = 0;
};

/// |a & b| / |a | b|; two empty masks give 0. Throws DimensionError on raster mismatch.
double mask_iou(const Mask& a, const Mask& b);

struct NmsOptions {
  double tau = 0.5;
  double iou_max = 0.5;
  bool per_class = false;  // suppress only within the same class
};

Mask binarize(const InstancePrediction& pred);

/// Drops queries whose argmax is "no object" or whose best real-class score is
/// not above tau, orders the rest by score (ties by query index) and greedily
/// suppresses any mask overlapping a kept one by more than iou_max.
std::vector<DetectedInstance> select_and_suppress(const std::vector<InstancePrediction>& preds,
                                                  const NmsOptions& options = {});

}  // namespace winbev
