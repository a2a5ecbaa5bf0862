// SPDX-License-Identifier: Apache-2.0
#include "winbev/harness/evaluate.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <tuple>

#include "winbev/errors.hpp"

namespace winbev {

namespace {

void check_scenes(std::size_t dets, std::size_t gts) {
  if (dets != gts) {
    throw DimensionError("detections cover " + std::to_string(dets) + " scenes, ground truth " + std::to_string(gts));
  }
}

}  // namespace

std::vector<PrPoint> pr_curve(const std::vector<std::vector<DetectedInstance>>& dets,
                              const std::vector<std::vector<GroundTruthInstance>>& gts, int class_id,
                              double threshold) {
  check_scenes(dets.size(), gts.size());
  struct Ranked {
    double score;
    std::size_t scene, query, index;
  };
  std::vector<Ranked> order;
  for (std::size_t s = 0; s < dets.size(); ++s)
    for (std::size_t i = 0; i < dets[s].size(); ++i)
      if (dets[s][i].class_id == class_id) order.push_back({dets[s][i].score, s, dets[s][i].query, i});
  std::stable_sort(order.begin(), order.end(), [](const Ranked& a, const Ranked& b) {
    return std::tie(b.score, a.scene, a.query) < std::tie(a.score, b.scene, b.query);
  });

  std::size_t positives = 0;
  std::vector<std::vector<bool>> taken(gts.size());
  for (std::size_t s = 0; s < gts.size(); ++s) {
    taken[s].assign(gts[s].size(), false);
    for (const auto& g : gts[s]) positives += g.class_id == class_id;
  }

  std::vector<PrPoint> curve;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& d = dets[order[r].scene][order[r].index];
    const auto& scene_gts = gts[order[r].scene];
    double best = -1;
    std::size_t pick = scene_gts.size();
    for (std::size_t g = 0; g < scene_gts.size(); ++g) {
      if (taken[order[r].scene][g] || scene_gts[g].class_id != class_id) continue;
      const double iou = mask_iou(d.binary_mask, scene_gts[g].footprint_mask);
      if (iou > best) best = iou, pick = g;
    }
    if (pick < scene_gts.size() && best >= threshold) {
      taken[order[r].scene][pick] = true;
      ++tp;
    }
    PrPoint p;
    p.precision = static_cast<double>(tp) / static_cast<double>(r + 1);
    p.recall = positives ? static_cast<double>(tp) / static_cast<double>(positives) : 0.0;
    curve.push_back(p);
  }
  return curve;
}

double interpolated_ap(const std::vector<PrPoint>& curve) {
  std::vector<double> envelope(curve.size());
  double run = 0;
  for (std::size_t i = curve.size(); i-- > 0;) envelope[i] = run = std::max(run, curve[i].precision);
  double sum = 0;
  std::size_t i = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    while (i < curve.size() && curve[i].recall < r - 1e-12) ++i;
    if (i == curve.size()) break;
    sum += envelope[i];
  }
  return sum / 101.0;
}

EvalReport evaluate(const std::vector<std::vector<DetectedInstance>>& dets,
                    const std::vector<std::vector<GroundTruthInstance>>& gts) {
  check_scenes(dets.size(), gts.size());
  EvalReport report;
  std::set<int> classes;
  std::size_t total_gts = 0;
  for (std::size_t s = 0; s < gts.size(); ++s) {
    report.scenes.push_back({gts[s].size(), dets[s].size()});
    for (const auto& g : gts[s]) classes.insert(g.class_id);
    total_gts += gts[s].size();
    for (const auto& d : dets[s])
      for (const auto& g : gts[s])
        if (!d.binary_mask.same_raster(g.footprint_mask)) throw DimensionError("detection and ground-truth rasters differ");
  }
  if (total_gts == 0) return report;

  double ap50 = 0, ap70 = 0;
  for (int c : classes) {
    report.ap50_per_class[c] = interpolated_ap(pr_curve(dets, gts, c, 0.5));
    report.ap70_per_class[c] = interpolated_ap(pr_curve(dets, gts, c, 0.7));
    ap50 += report.ap50_per_class[c];
    ap70 += report.ap70_per_class[c];
  }
  report.ap50 = ap50 / static_cast<double>(classes.size());
  report.ap70 = ap70 / static_cast<double>(classes.size());
  report.map = (*report.ap50 + *report.ap70) / 2.0;

  double iou_sum = 0;
  for (std::size_t s = 0; s < gts.size(); ++s) {
    for (const auto& g : gts[s]) {
      double best = 0;
      for (const auto& d : dets[s])
        if (d.class_id == g.class_id) best = std::max(best, mask_iou(d.binary_mask, g.footprint_mask));
      iou_sum += best;
    }
  }
  report.miou = iou_sum / static_cast<double>(total_gts);
  return report;
}

std::vector<double> BoundaryReport::ratios() const {
  std::vector<double> out;
  for (const auto& [id, r] : best_ratio) out.push_back(r);
  return out;
}

BoundaryReport boundary_completion(const std::vector<VisibilityObservation>& observations,
                                   double visibility_floor) {
  if (!(visibility_floor >= 0 && visibility_floor <= 1)) throw ParameterError("visibility floor must lie in [0, 1]");
  BoundaryReport report;
  std::map<std::size_t, double> best;
  for (const auto& o : observations) {
    if (!o.observed.same_raster(o.full)) throw DimensionError("observed and full masks use different rasters");
    const std::size_t full = o.full.area();
    if (full == 0) {
      ++report.empty_full;
      continue;
    }
    const double ratio = static_cast<double>(mask_and(o.observed, o.full).area()) / static_cast<double>(full);
    auto [it, fresh] = best.emplace(o.instance, ratio);
    if (!fresh) it->second = std::max(it->second, ratio);
  }
  for (const auto& [id, r] : best) {
    if (r < visibility_floor) {
      ++report.below_floor;
      continue;
    }
    report.best_ratio[id] = r;
    const auto bin = std::min<std::size_t>(kCompletionBins - 1, static_cast<std::size_t>(r * kCompletionBins));
    ++report.histogram[bin];
  }
  return report;
}

}  // namespace winbev
