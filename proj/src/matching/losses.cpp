// SPDX-License-Identifier: Apache-2.0
#include "winbev/matching/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "winbev/errors.hpp"
#include "winbev/numerics/ops.hpp"

namespace winbev {

void LossWeights::validate() const {
  if (cls < 0 || mask < 0 || dice < 0) throw ParameterError("loss weights must be nonnegative");
  if (cls == 0 && mask == 0 && dice == 0) throw ParameterError("loss weights must not all be zero");
}

namespace {

// Cost terms from raw class log-probabilities and mask logits.
template <typename T>
CostTerms terms_from(double log_prob, std::span<const T> logits, const Mask& target) {
  CostTerms t;
  t.cls = -log_prob;
  double bce = 0, inter = 0, ssum = 0, gsum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i];
    const double y = target.cells[i] ? 1.0 : 0.0;
    bce += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    const double s = 1.0 / (1.0 + std::exp(-x));
    inter += s * y;
    ssum += s;
    gsum += y;
  }
  t.mask = logits.empty() ? 0.0 : bce / static_cast<double>(logits.size());
  t.dice = 1.0 - (2.0 * inter + kDiceEpsilon) / (ssum + gsum + kDiceEpsilon);
  return t;
}

void check_raster(std::size_t logits, const GroundTruthInstance& gt) {
  if (logits != gt.footprint_mask.cells.size()) {
    throw DimensionError("prediction has " + std::to_string(logits) + " mask cells, ground truth has " +
                         std::to_string(gt.footprint_mask.cells.size()));
  }
}

void check_class(int class_id, std::size_t classes) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= classes) {
    throw ParameterError("ground-truth class " + std::to_string(class_id) + " outside the " +
                         std::to_string(classes) + " configured classes");
  }
}

template <typename T>
std::vector<double> log_softmax_row(std::span<const T> row) {
  double mx = -INFINITY;
  for (T v : row) mx = std::max(mx, static_cast<double>(v));
  double sum = 0;
  for (T v : row) sum += std::exp(static_cast<double>(v) - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = static_cast<double>(row[i]) - lse;
  return out;
}

}  // namespace

CostTerms match_cost_terms(const InstancePrediction& pred, const GroundTruthInstance& gt) {
  check_raster(pred.mask_logits.size(), gt);
  check_class(gt.class_id, pred.class_dist.size() - 1);
  const double p = pred.class_dist[static_cast<std::size_t>(gt.class_id)];
  return terms_from<float>(std::log(std::max(p, 1e-300)), pred.mask_logits, gt.footprint_mask);
}

double match_cost(const InstancePrediction& pred, const GroundTruthInstance& gt, const LossWeights& w) {
  return match_cost_terms(pred, gt).weighted(w);
}

CostMatrix cost_matrix(const std::vector<InstancePrediction>& preds, const std::vector<GroundTruthInstance>& gts,
                       const LossWeights& w) {
  CostMatrix c(preds.size(), gts.size());
  for (std::size_t p = 0; p < preds.size(); ++p)
    for (std::size_t g = 0; g < gts.size(); ++g) c(p, g) = match_cost(preds[p], gts[g], w);
  return c;
}

template <typename T>
BasicTensor<T> mask_bce_loss(const BasicTensor<T>& logits, std::span<const T> targets) {
  if (logits.rank() != 2) throw DimensionError("mask loss expects [R, P] logits, got " + shape_str(logits.shape()));
  const double p = static_cast<double>(logits.dim(1));
  return ops::scale(ops::sum_all(ops::bce_with_logits(logits, targets)), 1.0 / p);
}

template <typename T>
BasicTensor<T> dice_loss(const BasicTensor<T>& logits, std::span<const T> targets) {
  if (logits.rank() != 2) throw DimensionError("dice loss expects [R, P] logits, got " + shape_str(logits.shape()));
  if (targets.size() != logits.numel()) throw DimensionError("dice targets do not match the logits");
  const std::size_t r = logits.dim(0), p = logits.dim(1);
  auto sig = ops::sigmoid(logits);
  auto tg = BasicTensor<T>::constant(logits.shape(), std::vector<T>(targets.begin(), targets.end()));
  std::vector<T> gsum(r, T(0));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < p; ++j) gsum[i] += targets[i * p + j];
  auto inter = ops::sum_axis(ops::mul(sig, tg), 1);
  auto denom = ops::add(ops::add_scalar(ops::sum_axis(sig, 1), kDiceEpsilon), BasicTensor<T>::constant({r}, gsum));
  auto ratio = ops::div(ops::add_scalar(ops::scale(inter, 2.0), kDiceEpsilon), denom);
  return ops::add_scalar(ops::scale(ops::sum_all(ratio), -1.0), static_cast<double>(r));
}

template <typename T>
LossResult<T> total_loss(const std::vector<BasicLayerPrediction<T>>& layers,
                         const std::vector<GroundTruthInstance>& gts, const LossWeights& w) {
  w.validate();
  if (layers.empty()) throw DimensionError("total loss needs at least one decoder layer");
  LossResult<T> out;
  for (const auto& layer : layers) {
    const std::size_t n = layer.class_logits.dim(0);
    const std::size_t k1 = layer.class_logits.dim(1);
    const std::size_t hw = layer.mask_logits.dim(1);
    const auto cv = layer.class_logits.values();
    const auto mv = layer.mask_logits.values();
    for (const auto& gt : gts) {
      check_raster(hw, gt);
      check_class(gt.class_id, k1 - 1);
    }

    CostMatrix cost(n, gts.size());
    for (std::size_t q = 0; q < n; ++q) {
      const auto logp = log_softmax_row<T>(cv.subspan(q * k1, k1));
      const auto logits = mv.subspan(q * hw, hw);
      for (std::size_t g = 0; g < gts.size(); ++g) {
        cost(q, g) = terms_from<T>(logp[static_cast<std::size_t>(gts[g].class_id)], logits, gts[g].footprint_mask)
                         .weighted(w);
      }
    }
    auto assignment = hungarian(cost);

    std::vector<std::int64_t> picks(n);
    for (std::size_t q = 0; q < n; ++q) picks[q] = static_cast<std::int64_t>(q * k1 + (k1 - 1));
    for (const auto& [q, g] : assignment.pairs) {
      picks[q] = static_cast<std::int64_t>(q * k1 + static_cast<std::size_t>(gts[g].class_id));
    }
    auto logp = ops::log_softmax_last(layer.class_logits);
    auto loss = ops::scale(ops::sum_all(ops::gather(logp, std::move(picks), {n})), -w.cls);

    if (!assignment.pairs.empty()) {
      const std::size_t m = assignment.pairs.size();
      std::vector<std::int64_t> rows(m * hw);
      std::vector<T> targets(m * hw);
      for (std::size_t i = 0; i < m; ++i) {
        const auto [q, g] = assignment.pairs[i];
        const auto& cells = gts[g].footprint_mask.cells;
        for (std::size_t j = 0; j < hw; ++j) {
          rows[i * hw + j] = static_cast<std::int64_t>(q * hw + j);
          targets[i * hw + j] = cells[j] ? T(1) : T(0);
        }
      }
      auto matched = ops::gather(layer.mask_logits, std::move(rows), {m, hw});
      const std::span<const T> tspan(targets);
      loss = ops::add(loss, ops::scale(mask_bce_loss(matched, tspan), w.mask));
      loss = ops::add(loss, ops::scale(dice_loss(matched, tspan), w.dice));
    }
    out.loss = out.loss.defined() ? ops::add(out.loss, loss) : loss;
    out.assignments.push_back(std::move(assignment));
  }
  return out;
}

#define WINBEV_INSTANTIATE_LOSSES(T)                                                                       \
  template BasicTensor<T> mask_bce_loss<T>(const BasicTensor<T>&, std::span<const T>);                     \
  template BasicTensor<T> dice_loss<T>(const BasicTensor<T>&, std::span<const T>);                         \
  template LossResult<T> total_loss<T>(const std::vector<BasicLayerPrediction<T>>&,                        \
                                       const std::vector<GroundTruthInstance>&, const LossWeights&);

WINBEV_INSTANTIATE_LOSSES(float)
WINBEV_INSTANTIATE_LOSSES(double)

}  // namespace winbev
