// SPDX-License-Identifier: Apache-2.0
#include "winbev/spcn/complexity.hpp"

#include <cmath>
#include <random>

#include "winbev/errors.hpp"
#include "winbev/spcn/attention.hpp"

namespace winbev {

namespace {

std::vector<float> random_values(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace

ComplexityReport complexity_report(std::size_t height, std::size_t width, std::size_t window, std::size_t dim,
                                   bool measure, std::uint64_t seed) {
  if (window == 0 || height % window != 0 || width % window != 0) {
    throw PartitionError("cannot partition H=" + std::to_string(height) + ", W=" + std::to_string(width) +
                         " into windows of M=" + std::to_string(window));
  }
  ComplexityReport rep;
  rep.height = height;
  rep.width = width;
  rep.window = window;
  rep.dim = dim;
  const double hw = static_cast<double>(height) * static_cast<double>(width);
  const double m2 = static_cast<double>(window) * static_cast<double>(window);
  rep.omega_spcn = hw * m2;
  rep.omega_global = hw * hw;
  rep.ratio = hw / m2;
  if (!measure) return rep;

  std::mt19937_64 rng(seed);
  const std::size_t n = height * width;
  const std::size_t k = n / (window * window);
  const std::size_t t = window * window;
  OpCounter counter;
  {
    auto q = Tensor::constant({k, t, dim}, random_values(n * dim, rng));
    auto kk = Tensor::constant({k, t, dim}, random_values(n * dim, rng));
    auto v = Tensor::constant({k, t, dim}, random_values(n * dim, rng));
    softmax_attention(q, kk, v, &counter, "window_softmax");
    linear_attention(q, kk, v, true, &counter, "window_linear");
  }
  {
    const auto q = random_values(n * dim, rng);
    const auto kk = random_values(n * dim, rng);
    const auto v = random_values(n * dim, rng);
    std::vector<float> out(n * dim);
    softmax_attention_streaming(q, kk, v, n, dim, out, &counter, "global_softmax");
  }
  MeasuredComplexity m;
  m.window_softmax = counter.mults("window_softmax");
  m.window_linear = counter.mults("window_linear");
  m.global_softmax = counter.mults("global_softmax");
  m.ratio = static_cast<double>(m.global_softmax) / static_cast<double>(m.window_softmax);
  m.records = counter.records();
  rep.measured = std::move(m);
  return rep;
}

std::uint64_t count_linear_attention(std::size_t n, std::size_t d) {
  std::mt19937_64 rng(n * 131 + d);
  OpCounter counter;
  auto q = Tensor::constant({n, d}, random_values(n * d, rng));
  auto k = Tensor::constant({n, d}, random_values(n * d, rng));
  auto v = Tensor::constant({n, d}, random_values(n * d, rng));
  linear_attention(q, k, v, true, &counter);
  return counter.total();
}

std::uint64_t count_softmax_attention(std::size_t n, std::size_t d) {
  std::mt19937_64 rng(n * 137 + d);
  OpCounter counter;
  auto q = Tensor::constant({n, d}, random_values(n * d, rng));
  auto k = Tensor::constant({n, d}, random_values(n * d, rng));
  auto v = Tensor::constant({n, d}, random_values(n * d, rng));
  softmax_attention(q, k, v, &counter);
  return counter.total();
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("slope fit needs two or more matched samples");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace winbev
