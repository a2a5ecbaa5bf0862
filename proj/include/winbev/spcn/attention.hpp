// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>

#include "winbev/numerics/op_counter.hpp"
#include "winbev/numerics/ops.hpp"

namespace winbev {

// Attention kernels take [N, d] or batched [B, N, d] operands and return the
// same rank. When a counter is given, one record (N, d, mults) is added per call.

/// phi(Q) (phi(K)^T V), phi = ELU + 1. With `normalize` each row is divided by
/// phi(Q_i) phi(K)^T 1, making it a convex combination of the rows of V.
template <typename T>
ops::Tn<T> linear_attention(const ops::Tn<T>& q, const ops::Tn<T>& k, const ops::Tn<T>& v, bool normalize = true,
                            OpCounter* counter = nullptr, const std::string& kernel = "linear_attention");

/// The same quantity evaluated as (phi(Q) phi(K)^T) V; quadratic in N.
template <typename T>
ops::Tn<T> linear_attention_naive(const ops::Tn<T>& q, const ops::Tn<T>& k, const ops::Tn<T>& v,
                                  bool normalize = true, OpCounter* counter = nullptr,
                                  const std::string& kernel = "linear_attention_naive");

/// softmax(Q K^T / sqrt(d)) V. Queries and keys may differ in length.
template <typename T>
ops::Tn<T> softmax_attention(const ops::Tn<T>& q, const ops::Tn<T>& k, const ops::Tn<T>& v,
                             OpCounter* counter = nullptr, const std::string& kernel = "softmax_attention");

/// Row-streamed softmax attention over N tokens of width d without building the
/// N x N score matrix. Plain buffers, no gradient. `out` must hold N*d values.
void softmax_attention_streaming(std::span<const float> q, std::span<const float> k, std::span<const float> v,
                                 std::size_t n, std::size_t d, std::span<float> out, OpCounter* counter = nullptr,
                                 const std::string& kernel = "global_softmax");

}  // namespace winbev
