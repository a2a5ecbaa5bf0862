// SPDX-License-Identifier: Apache-2.0
#include "winbev/harness/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "winbev/harness/artifacts.hpp"
#include "winbev/matching/hungarian.hpp"
#include "winbev/matching/losses.hpp"
#include "winbev/numerics/grad_check.hpp"
#include "winbev/spcn/attention.hpp"
#include "winbev/spcn/complexity.hpp"
#include "winbev/spcn/spcn.hpp"

namespace winbev {

namespace {

template <typename T>
std::vector<T> normal(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return v;
}

double brute_force(const CostMatrix& c) {
  std::vector<std::size_t> perm(c.rows);
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double s = 0;
    for (std::size_t g = 0; g < c.cols; ++g) s += c(perm[g], g);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

SelfCheck reassociation(std::mt19937_64& rng) {
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    auto q = DTensor::constant({32, 8}, normal<double>(rng, 256));
    auto k = DTensor::constant({32, 8}, normal<double>(rng, 256));
    auto v = DTensor::constant({32, 8}, normal<double>(rng, 256));
    const auto fast = linear_attention(q, k, v);
    const auto slow = linear_attention_naive(q, k, v);
    const auto a = fast.values(), b = slow.values();
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return {"linear attention reassociation", worst < 1e-5, "max diff " + std::to_string(worst)};
}

SelfCheck hungarian_oracle(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::uniform_int_distribution<std::size_t> size(2, 6);
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t gts = size(rng);
    const std::size_t preds = std::max(gts, size(rng));
    CostMatrix c(preds, gts);
    for (auto& x : c.values) x = u(rng);
    worst = std::max(worst, std::abs(hungarian(c).cost - brute_force(c)));
  }
  return {"hungarian vs exhaustive search", worst < 1e-9, "max cost gap " + std::to_string(worst)};
}

SelfCheck window_round_trip(std::mt19937_64& rng) {
  bool ok = true;
  for (std::size_t m : {2u, 4u, 8u}) {
    auto x = Tensor::constant({m * 3, m * 2, 5}, normal<float>(rng, m * 3 * m * 2 * 5));
    const auto back = unpartition(partition(x, m));
    ok = ok && std::equal(back.values().begin(), back.values().end(), x.values().begin());
  }
  return {"partition / unpartition round trip", ok, ok ? "exact" : "mismatch"};
}

SelfCheck pgm_round_trip(std::mt19937_64& rng, const std::filesystem::path& scratch) {
  std::filesystem::create_directories(scratch);
  Mask m(37, 23);
  std::bernoulli_distribution coin(0.3);
  for (auto& c : m.cells) c = coin(rng);
  const auto path = scratch / "selftest_mask.pgm";
  write_pgm(path, mask_image(m));
  const bool ok = image_mask(read_pgm(path)) == m;
  std::filesystem::remove(path);
  return {"PGM write / read round trip", ok, ok ? "bit exact" : "mismatch"};
}

SelfCheck complexity_ratio() {
  const auto r = complexity_report(200, 200, 10, 4, false);
  return {"analytic complexity ratio", r.ratio == 400.0, "ratio " + std::to_string(r.ratio)};
}

SelfCheck gradients(std::mt19937_64& rng) {
  double worst = 0;
  for (int t = 0; t < 5; ++t) {
    auto x = DTensor::constant({3, 6}, normal<double>(rng, 18));
    const auto w = normal<double>(rng, 18);
    worst = std::max(worst, grad_check<double>(
                                [&](const DTensor& a) {
                                  return ops::sum_all(ops::mul(ops::layer_norm_last(a, 1e-5), DTensor::constant({3, 6}, w)));
                                },
                                x, 1e-5));
    std::vector<double> target(18);
    for (std::size_t i = 0; i < 18; ++i) target[i] = w[i] > 0 ? 1.0 : 0.0;
    worst = std::max(worst, grad_check<double>(
                                [&](const DTensor& a) { return dice_loss<double>(a, std::span<const double>(target)); }, x,
                                1e-5));
  }
  return {"layer norm and dice gradients", worst < 1e-3, "max rel err " + std::to_string(worst)};
}

}  // namespace

std::vector<SelfCheck> run_selftest(std::uint64_t seed, const std::filesystem::path& scratch) {
  std::mt19937_64 rng(seed);
  std::vector<SelfCheck> out;
  out.push_back(reassociation(rng));
  out.push_back(hungarian_oracle(rng));
  out.push_back(window_round_trip(rng));
  out.push_back(pgm_round_trip(rng, scratch));
  out.push_back(complexity_ratio());
  out.push_back(gradients(rng));
  return out;
}

}  // namespace winbev
