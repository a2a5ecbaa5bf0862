// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <optional>
#include <vector>

#include "winbev/inference/inference.hpp"
#include "winbev/pointcloud/synth.hpp"

namespace winbev {

struct PrPoint {
  double precision = 0, recall = 0;
};

/// Score-ranked greedy matching of one class across scenes: each detection,
/// taken by descending score (ties by scene, then query), claims the unmatched
/// ground truth it overlaps most and counts as a true positive when that IoU
/// reaches `threshold`. Returns one point per ranked detection.
std::vector<PrPoint> pr_curve(const std::vector<std::vector<DetectedInstance>>& dets,
                              const std::vector<std::vector<GroundTruthInstance>>& gts, int class_id,
                              double threshold);

/// Area under the precision envelope sampled at recall 0, 0.01, ..., 1.
double interpolated_ap(const std::vector<PrPoint>& curve);

struct SceneCounts {
  std::size_t ground_truths = 0;
  std::size_t detections = 0;
};

struct EvalReport {
  // Empty when no scene carries a ground truth.
  std::optional<double> ap50, ap70, map, miou;
  std::map<int, double> ap50_per_class, ap70_per_class;
  std::vector<SceneCounts> scenes;
};

/// AP is averaged over the classes present in the ground truth; mAP is the
/// mean of AP50 and AP70; mIoU is the mean over ground truths of the best IoU
/// with a same-class detection. Throws DimensionError on mismatched rasters.
EvalReport evaluate(const std::vector<std::vector<DetectedInstance>>& dets,
                    const std::vector<std::vector<GroundTruthInstance>>& gts);

struct VisibilityObservation {
  std::size_t instance = 0;
  Mask observed;
  Mask full;
};

inline constexpr std::size_t kCompletionBins = 10;

struct BoundaryReport {
  std::map<std::size_t, double> best_ratio;  // instances at or above the floor
  std::size_t below_floor = 0;
  std::size_t empty_full = 0;  // observations skipped for an empty full mask
  std::array<std::size_t, kCompletionBins> histogram{};  // bins of width 0.1, 1.0 in the last

  std::vector<double> ratios() const;
};

/// |observed & full| / |full| per observation, maximised per instance.
/// Instances whose best ratio is under `visibility_floor` are left out.
BoundaryReport boundary_completion(const std::vector<VisibilityObservation>& observations,
                                   double visibility_floor);

}  // namespace winbev
