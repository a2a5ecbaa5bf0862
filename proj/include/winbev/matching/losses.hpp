// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "winbev/decoder/decoder.hpp"
#include "winbev/matching/hungarian.hpp"
#include "winbev/pointcloud/synth.hpp"

namespace winbev {

struct LossWeights {
  double cls = 2.0;
  double mask = 5.0;
  double dice = 5.0;

  // Throws ParameterError on negative or all-zero weights.
  void validate() const;
};

inline constexpr double kDiceEpsilon = 1.0;

struct CostTerms {
  double cls = 0, mask = 0, dice = 0;
  double weighted(const LossWeights& w) const { return w.cls * cls + w.mask * mask + w.dice * dice; }
};

/// -log p(class), mean BCE of the sigmoid mask and soft dice against the target.
/// Throws DimensionError when the rasters differ.
CostTerms match_cost_terms(const InstancePrediction& pred, const GroundTruthInstance& gt);
double match_cost(const InstancePrediction& pred, const GroundTruthInstance& gt, const LossWeights& w);

/// Cost of every (prediction, ground truth) pair of one layer.
CostMatrix cost_matrix(const std::vector<InstancePrediction>& preds, const std::vector<GroundTruthInstance>& gts,
                       const LossWeights& w);

/// Sum over rows of the mean elementwise BCE of logits [R, P] against targets.
template <typename T>
BasicTensor<T> mask_bce_loss(const BasicTensor<T>& logits, std::span<const T> targets);

/// Sum over rows of 1 - (2<s, g> + eps) / (|s| + |g| + eps), s = sigmoid(logits).
template <typename T>
BasicTensor<T> dice_loss(const BasicTensor<T>& logits, std::span<const T> targets);

template <typename T>
struct LossResult {
  BasicTensor<T> loss;
  std::vector<Assignment> assignments;  // one per layer
};

/// Deep-supervised set loss. Each layer is matched with the Hungarian solver on
/// detached costs; matched queries pay all three terms, every other query pays
/// the weighted classification term against "no object".
template <typename T>
LossResult<T> total_loss(const std::vector<BasicLayerPrediction<T>>& layers,
                         const std::vector<GroundTruthInstance>& gts, const LossWeights& w);

}  // namespace winbev
