// SPDX-License-Identifier: Apache-2.0
#include "winbev/inference/inference.hpp"

#include <algorithm>

#include "winbev/errors.hpp"

namespace winbev {

double mask_iou(const Mask& a, const Mask& b) {
  if (!a.same_raster(b)) {
    throw DimensionError("mask rasters differ: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) + " vs " +
                         std::to_string(b.rows) + "x" + std::to_string(b.cols));
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    const bool x = a.cells[i] != 0, y = b.cells[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Mask binarize(const InstancePrediction& pred) {
  Mask m(pred.height, pred.width);
  for (std::size_t i = 0; i < m.cells.size(); ++i) m.cells[i] = pred.mask_logits[i] > 0.0f ? 1 : 0;
  return m;
}

std::vector<DetectedInstance> select_and_suppress(const std::vector<InstancePrediction>& preds,
                                                  const NmsOptions& options) {
  std::vector<DetectedInstance> candidates;
  for (std::size_t q = 0; q < preds.size(); ++q) {
    const auto& dist = preds[q].class_dist;
    if (dist.size() < 2) throw DimensionError("class distribution needs a real class and no-object");
    const std::size_t no_object = dist.size() - 1;
    const auto best = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
    if (best == no_object) continue;
    if (!(dist[best] > options.tau)) continue;
    candidates.push_back({static_cast<int>(best), dist[best], binarize(preds[q]), q});
  }
  std::sort(candidates.begin(), candidates.end(), [](const DetectedInstance& a, const DetectedInstance& b) {
    return a.score != b.score ? a.score > b.score : a.query < b.query;
  });
  std::vector<DetectedInstance> kept;
  for (auto& c : candidates) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const DetectedInstance& k) {
      if (options.per_class && k.class_id != c.class_id) return false;
      return mask_iou(k.binary_mask, c.binary_mask) > options.iou_max;
    });
    if (!suppressed) kept.push_back(std::move(c));
  }
  return kept;
}

}  // namespace winbev
