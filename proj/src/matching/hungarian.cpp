// SPDX-License-Identifier: Apache-2.0
#include "winbev/matching/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "winbev/errors.hpp"

namespace winbev {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Optimal assignment of `gts` to distinct members of `preds` (|gts| <= |preds|).
// Returns the prediction chosen for each ground truth, in `gts` order.
std::vector<std::size_t> solve(const CostMatrix& cost, const std::vector<std::size_t>& gts,
                               const std::vector<std::size_t>& preds) {
  const std::size_t n = gts.size();
  const std::size_t m = preds.size();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(preds[j - 1], gts[i0 - 1]) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> out(n);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) out[p[j] - 1] = preds[j - 1];
  }
  return out;
}

double total(const CostMatrix& cost, const std::vector<std::size_t>& gts, const std::vector<std::size_t>& chosen) {
  double t = 0;
  for (std::size_t g = 0; g < gts.size(); ++g) t += cost(chosen[g], gts[g]);
  return t;
}

}  // namespace

Assignment hungarian(const CostMatrix& cost) {
  if (cost.rows < cost.cols) {
    throw CapacityError(std::to_string(cost.rows) + " predictions cannot cover " + std::to_string(cost.cols) +
                        " ground truths");
  }
  for (double c : cost.values) {
    if (!std::isfinite(c)) throw EvaluationError("matching cost is not finite");
  }
  Assignment out;
  std::vector<std::size_t> gts(cost.cols), preds(cost.rows);
  for (std::size_t g = 0; g < cost.cols; ++g) gts[g] = g;
  for (std::size_t r = 0; r < cost.rows; ++r) preds[r] = r;

  if (!gts.empty()) {
    double remaining = total(cost, gts, solve(cost, gts, preds));
    // Fix ground truths in order to the smallest prediction that keeps the optimum.
    for (std::size_t g = 0; g < cost.cols; ++g) {
      const std::vector<std::size_t> rest_gts(gts.begin() + static_cast<std::ptrdiff_t>(g + 1), gts.end());
      const double tol = 1e-9 * std::max(1.0, std::abs(remaining));
      bool fixed = false;
      for (std::size_t k = 0; k < preds.size() && !fixed; ++k) {
        std::vector<std::size_t> rest_preds = preds;
        rest_preds.erase(rest_preds.begin() + static_cast<std::ptrdiff_t>(k));
        const double rest = rest_gts.empty() ? 0.0 : total(cost, rest_gts, solve(cost, rest_gts, rest_preds));
        if (cost(preds[k], g) + rest <= remaining + tol) {
          out.pairs.emplace_back(preds[k], g);
          remaining = rest;
          preds = std::move(rest_preds);
          fixed = true;
        }
      }
      if (!fixed) throw EvaluationError("assignment refinement lost the optimum");
    }
  }
  for (const auto& [p, g] : out.pairs) out.cost += cost(p, g);
  std::vector<char> taken(cost.rows, 0);
  for (const auto& [p, _] : out.pairs) taken[p] = 1;
  for (std::size_t r = 0; r < cost.rows; ++r) {
    if (!taken[r]) out.unmatched_predictions.push_back(r);
  }
  return out;
}

}  // namespace winbev
