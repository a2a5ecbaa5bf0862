// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "winbev/errors.hpp"
#include "winbev/numerics/tensor.hpp"

namespace winbev {

/// Compares reverse-mode gradients of a scalar function against central
/// differences. Returns max_i |analytic_i - central_i| / (|analytic_i| + |central_i| + eps).
///
/// `f` is evaluated on fresh leaves, so it must not close over `x` itself.
template <typename T>
double grad_check(const std::function<BasicTensor<T>(const BasicTensor<T>&)>& f,
                  const BasicTensor<T>& x, double h = 1e-3, double eps = 1e-6) {
  const std::vector<T> base(x.values().begin(), x.values().end());
  auto eval = [&](const std::vector<T>& v) {
    auto leaf = BasicTensor<T>::constant(x.shape(), v);
    const double y = static_cast<double>(f(leaf).item());
    if (!std::isfinite(y)) throw EvaluationError("grad_check: function value is not finite");
    return y;
  };

  auto leaf = BasicTensor<T>::parameter(x.shape(), base);
  auto y = f(leaf);
  if (!std::isfinite(static_cast<double>(y.item()))) {
    throw EvaluationError("grad_check: function value is not finite");
  }
  y.backward();
  std::vector<double> analytic(base.size(), 0.0);
  if (leaf.has_grad()) {
    std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
  }

  double worst = 0.0;
  std::vector<T> probe = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    probe[i] = static_cast<T>(base[i] + h);
    const double up = eval(probe);
    probe[i] = static_cast<T>(base[i] - h);
    const double down = eval(probe);
    probe[i] = base[i];
    const double central = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - central) / (std::abs(analytic[i]) + std::abs(central) + eps);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace winbev
