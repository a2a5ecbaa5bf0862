// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "winbev/numerics/op_counter.hpp"
#include "winbev/numerics/tensor.hpp"

// Differentiable tensor primitives. Every op is defined for float and double
// storage; reductions accumulate in double regardless of storage type.
//
// Binary elementwise ops broadcast their second operand when it is
//   - the same shape as the first,
//   - a single element,
//   - a trailing-suffix of the first's shape (e.g. a bias over the last axis), or
//   - the first's shape with the last extent collapsed to 1 (a per-row value).
namespace winbev::ops {

template <typename T> using Tn = BasicTensor<T>;

template <typename T> Tn<T> add(const Tn<T>& a, const Tn<T>& b);
template <typename T> Tn<T> sub(const Tn<T>& a, const Tn<T>& b);
template <typename T> Tn<T> mul(const Tn<T>& a, const Tn<T>& b);
template <typename T> Tn<T> div(const Tn<T>& a, const Tn<T>& b);

template <typename T> Tn<T> scale(const Tn<T>& a, double s);
template <typename T> Tn<T> add_scalar(const Tn<T>& a, double s);

template <typename T> Tn<T> relu(const Tn<T>& a);
template <typename T> Tn<T> elu_plus_one(const Tn<T>& a);  // ELU(x) + 1, strictly positive
template <typename T> Tn<T> exp(const Tn<T>& a);
template <typename T> Tn<T> log(const Tn<T>& a);
template <typename T> Tn<T> sigmoid(const Tn<T>& a);
template <typename T> Tn<T> sin(const Tn<T>& a);
template <typename T> Tn<T> cos(const Tn<T>& a);
template <typename T> Tn<T> sqrt(const Tn<T>& a);
template <typename T> Tn<T> square(const Tn<T>& a);

// a[..., K] x b[K, M] -> [..., M]
template <typename T> Tn<T> matmul(const Tn<T>& a, const Tn<T>& b);
// Batched product of rank-3 operands; optional transposes on the last two axes.
// When `counter` is given the multiply-accumulates are recorded under `kernel`.
template <typename T>
Tn<T> bmm(const Tn<T>& a, const Tn<T>& b, bool transpose_a = false, bool transpose_b = false,
          OpCounter* counter = nullptr, const std::string& kernel = "bmm");

template <typename T> Tn<T> reshape(const Tn<T>& a, Shape shape);
// out[i] = a[index[i]], or 0 where index[i] < 0. Backward scatters.
template <typename T>
Tn<T> gather(const Tn<T>& a, std::shared_ptr<const std::vector<std::int64_t>> index, Shape shape);
template <typename T> Tn<T> gather(const Tn<T>& a, std::vector<std::int64_t> index, Shape shape);
template <typename T> Tn<T> concat_last(const std::vector<Tn<T>>& parts);
template <typename T> Tn<T> slice_last(const Tn<T>& a, std::size_t start, std::size_t length);
// Swaps the last two axes.
template <typename T> Tn<T> transpose_last2(const Tn<T>& a);

template <typename T> Tn<T> sum_all(const Tn<T>& a);
template <typename T> Tn<T> mean_all(const Tn<T>& a);
template <typename T> Tn<T> sum_axis(const Tn<T>& a, std::size_t axis, bool keepdim = false);
template <typename T> Tn<T> mean_axis(const Tn<T>& a, std::size_t axis, bool keepdim = false);

// Row-max subtracted before exponentiation.
template <typename T> Tn<T> softmax_last(const Tn<T>& a);
template <typename T> Tn<T> log_softmax_last(const Tn<T>& a);
// Normalises each last-axis slice to zero mean and unit variance (no affine).
template <typename T> Tn<T> layer_norm_last(const Tn<T>& a, double eps = 1e-5);

// x: [H, W, Cin], kernel: [kh, kw, Cin, Cout] with odd kh, kw. Zero "same" padding.
template <typename T> Tn<T> conv2d(const Tn<T>& x, const Tn<T>& kernel, std::size_t dilation = 1);
// x: [H, W, C] resampled with half-pixel centres and edge clamping.
template <typename T> Tn<T> resize_bilinear(const Tn<T>& x, std::size_t out_h, std::size_t out_w);

// Numerically stable elementwise binary cross-entropy on logits.
template <typename T> Tn<T> bce_with_logits(const Tn<T>& logits, std::span<const T> targets);

/// Multi-level bilinear sampling with per-head attention weights.
///
/// levels[l]: [H_l, W_l, D]. ref_xy: normalized (x, y) per query, size Nq*2.
/// offsets: [Nq, heads, L, P, 2] in pixels of the sampled level (x then y).
/// weights: [Nq, heads, L*P]. Head m reads channels [m*D/heads, (m+1)*D/heads).
/// Sampling position on level l is (x*W_l - 0.5 + dx, y*H_l - 0.5 + dy); taps
/// outside the map read zero. Returns [Nq, D].
template <typename T>
Tn<T> deformable_sample(const std::vector<Tn<T>>& levels, std::span<const double> ref_xy,
                        const Tn<T>& offsets, const Tn<T>& weights, std::size_t heads);

}  // namespace winbev::ops
