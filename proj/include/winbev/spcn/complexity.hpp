// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "winbev/numerics/op_counter.hpp"

namespace winbev {

struct MeasuredComplexity {
  std::uint64_t window_softmax = 0;  // per-window softmax attention over all K windows
  std::uint64_t window_linear = 0;   // per-window linear attention over all K windows
  std::uint64_t global_softmax = 0;  // one softmax attention over all HW tokens
  double ratio = 0;                  // global_softmax / window_softmax
  std::vector<OpCounter::Record> records;
};

struct ComplexityReport {
  std::size_t height = 0, width = 0, window = 0, dim = 0;
  double omega_spcn = 0;    // HW * M^2
  double omega_global = 0;  // (HW)^2
  double ratio = 0;         // HW / M^2
  std::optional<MeasuredComplexity> measured;
};

/// Analytic cost of windowed against global attention. With `measure` the
/// kernels are executed on random data of width d and their counters reported.
/// Throws PartitionError unless M divides H and W.
ComplexityReport complexity_report(std::size_t height, std::size_t width, std::size_t window, std::size_t dim,
                                   bool measure, std::uint64_t seed = 0);

/// Counted multiply-accumulates of one attention call at sequence length n.
std::uint64_t count_linear_attention(std::size_t n, std::size_t d);
std::uint64_t count_softmax_attention(std::size_t n, std::size_t d);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace winbev
