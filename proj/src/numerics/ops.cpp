// SPDX-License-Identifier: Apache-2.0
#include "winbev/numerics/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "winbev/errors.hpp"
#include "winbev/numerics/parallel.hpp"

namespace winbev::ops {

namespace {

enum class Broadcast { kSame, kScalar, kSuffix, kRow };

Broadcast classify(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::kSame;
  const auto nb = shape_numel(b);
  if (nb == 1) return Broadcast::kScalar;
  if (a.size() == b.size() && !a.empty() && b.back() == 1 &&
      std::equal(a.begin(), a.end() - 1, b.begin())) {
    return Broadcast::kRow;
  }
  if (b.size() <= a.size() && std::equal(b.begin(), b.end(), a.end() - b.size())) {
    return Broadcast::kSuffix;
  }
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " +
                       shape_str(a));
}

struct BroadcastIndex {
  Broadcast mode;
  std::size_t nb;
  std::size_t last;
  std::size_t operator()(std::size_t i) const {
    switch (mode) {
      case Broadcast::kSame: return i;
      case Broadcast::kScalar: return 0;
      case Broadcast::kSuffix: return i % nb;
      case Broadcast::kRow: return i / last;
    }
    return i;
  }
};

// Shared body of the four binary ops. `fwd(x, y)` gives the value, `da`/`db` the
// local partials.
template <typename T, typename F, typename DA, typename DB>
Tn<T> binary(const Tn<T>& a, const Tn<T>& b, const char* name, F fwd, DA da, DB db) {
  const auto mode = classify(a.shape(), b.shape(), name);
  const BroadcastIndex bi{mode, b.numel(), a.shape().empty() ? 1 : a.shape().back()};
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[bi(i)]);
  return Tn<T>::from_op(
      a.shape(), std::move(out), {&a, &b},
      [an = a.node(), bn = b.node(), bi, da, db](const std::vector<T>& g) {
        const auto& x = an->data;
        const auto& y = bn->data;
        if (auto* ga = grad_sink(an)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * da(x[i], y[bi(i)]);
        }
        if (auto* gb = grad_sink(bn)) {
          std::vector<double> acc(gb->size(), 0.0);
          for (std::size_t i = 0; i < g.size(); ++i) {
            acc[bi(i)] += static_cast<double>(g[i]) * db(x[i], y[bi(i)]);
          }
          for (std::size_t j = 0; j < acc.size(); ++j) (*gb)[j] += static_cast<T>(acc[j]);
        }
      });
}

// Elementwise unary op; `deriv(x, y)` is dy/dx given input and output.
template <typename T, typename F, typename D>
Tn<T> unary(const Tn<T>& a, F fwd, D deriv) {
  const auto av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  auto result = Tn<T>::from_op(a.shape(), std::move(out), {&a}, nullptr);
  if (result.requires_grad()) {
    // The closure needs the output values, so it is attached after construction.
    std::weak_ptr<detail::Node<T>> self = result.node();
    result.node()->backward = [an = a.node(), self, deriv](const std::vector<T>& g) {
      auto* ga = grad_sink(an);
      auto out_node = self.lock();
      if (!ga || !out_node) return;
      const auto& x = an->data;
      const auto& y = out_node->data;
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * deriv(x[i], y[i]);
    };
  }
  return result;
}

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t n = 1;
  for (std::size_t i = from; i < to; ++i) n *= s[i];
  return n;
}

}  // namespace

template <typename T>
Tn<T> add(const Tn<T>& a, const Tn<T>& b) {
  return binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return 1.0; });
}

template <typename T>
Tn<T> sub(const Tn<T>& a, const Tn<T>& b) {
  return binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return -1.0; });
}

template <typename T>
Tn<T> mul(const Tn<T>& a, const Tn<T>& b) {
  return binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return static_cast<double>(x); });
}

template <typename T>
Tn<T> div(const Tn<T>& a, const Tn<T>& b) {
  return binary(
      a, b, "div", [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -static_cast<double>(x) / (static_cast<double>(y) * y); });
}

template <typename T>
Tn<T> scale(const Tn<T>& a, double s) {
  return unary(
      a, [s](T x) { return static_cast<T>(x * s); }, [s](T, T) { return static_cast<T>(s); });
}

template <typename T>
Tn<T> add_scalar(const Tn<T>& a, double s) {
  return unary(
      a, [s](T x) { return static_cast<T>(x + s); }, [](T, T) { return T(1); });
}

template <typename T>
Tn<T> relu(const Tn<T>& a) {
  return unary(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tn<T> elu_plus_one(const Tn<T>& a) {
  return unary(
      a, [](T x) { return x > T(0) ? x + T(1) : std::exp(x); },
      [](T x, T y) { return x > T(0) ? T(1) : y; });
}

template <typename T>
Tn<T> exp(const Tn<T>& a) {
  return unary(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tn<T> log(const Tn<T>& a) {
  return unary(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tn<T> sigmoid(const Tn<T>& a) {
  return unary(
      a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tn<T> sin(const Tn<T>& a) {
  return unary(
      a, [](T x) { return std::sin(x); }, [](T x, T) { return std::cos(x); });
}

template <typename T>
Tn<T> cos(const Tn<T>& a) {
  return unary(
      a, [](T x) { return std::cos(x); }, [](T x, T) { return -std::sin(x); });
}

template <typename T>
Tn<T> sqrt(const Tn<T>& a) {
  return unary(
      a, [](T x) { return std::sqrt(x); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tn<T> square(const Tn<T>& a) {
  return unary(
      a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tn<T> matmul(const Tn<T>& a, const Tn<T>& b) {
  if (b.rank() != 2 || a.rank() < 1 || a.shape().back() != b.dim(0)) {
    throw DimensionError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t k_dim = b.dim(0);
  const std::size_t m_dim = b.dim(1);
  const std::size_t rows = a.numel() / k_dim;
  Shape out_shape = a.shape();
  out_shape.back() = m_dim;

  const auto av = a.values();
  const auto bv = b.values();
  std::vector<T> out(rows * m_dim);
  parallel_for(rows, [&](std::size_t r) {
    std::vector<double> acc(m_dim, 0.0);
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double x = av[r * k_dim + k];
      if (x == 0.0) continue;
      const T* brow = bv.data() + k * m_dim;
      for (std::size_t j = 0; j < m_dim; ++j) acc[j] += x * brow[j];
    }
    for (std::size_t j = 0; j < m_dim; ++j) out[r * m_dim + j] = static_cast<T>(acc[j]);
  });

  return Tn<T>::from_op(
      std::move(out_shape), std::move(out), {&a, &b},
      [an = a.node(), bn = b.node(), rows, k_dim, m_dim](const std::vector<T>& g) {
        const auto& x = an->data;
        const auto& w = bn->data;
        if (auto* ga = grad_sink(an)) {
          for (std::size_t r = 0; r < rows; ++r) {
            const T* grow = g.data() + r * m_dim;
            for (std::size_t k = 0; k < k_dim; ++k) {
              const T* wrow = w.data() + k * m_dim;
              double acc = 0.0;
              for (std::size_t j = 0; j < m_dim; ++j) acc += static_cast<double>(grow[j]) * wrow[j];
              (*ga)[r * k_dim + k] += static_cast<T>(acc);
            }
          }
        }
        if (auto* gb = grad_sink(bn)) {
          std::vector<double> acc(k_dim * m_dim, 0.0);
          for (std::size_t r = 0; r < rows; ++r) {
            const T* grow = g.data() + r * m_dim;
            for (std::size_t k = 0; k < k_dim; ++k) {
              const double xv = x[r * k_dim + k];
              if (xv == 0.0) continue;
              double* arow = acc.data() + k * m_dim;
              for (std::size_t j = 0; j < m_dim; ++j) arow[j] += xv * grow[j];
            }
          }
          for (std::size_t i = 0; i < acc.size(); ++i) (*gb)[i] += static_cast<T>(acc[i]);
        }
      });
}

template <typename T>
Tn<T> bmm(const Tn<T>& a, const Tn<T>& b, bool transpose_a, bool transpose_b, OpCounter* counter,
          const std::string& kernel) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
    throw DimensionError("bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0);
  const std::size_t n = transpose_a ? a.dim(2) : a.dim(1);
  const std::size_t k_dim = transpose_a ? a.dim(1) : a.dim(2);
  const std::size_t kb = transpose_b ? b.dim(2) : b.dim(1);
  const std::size_t m = transpose_b ? b.dim(1) : b.dim(2);
  if (k_dim != kb) {
    throw DimensionError("bmm: inner extents differ (" + std::to_string(k_dim) + " vs " +
                         std::to_string(kb) + ")");
  }
  const std::size_t a_stride = n * k_dim;
  const std::size_t b_stride = k_dim * m;
  // Flat offsets of logical A(i, k) and B(k, j) within one batch slice.
  auto a_at = [=](std::size_t i, std::size_t k) { return transpose_a ? k * n + i : i * k_dim + k; };
  auto b_at = [=](std::size_t k, std::size_t j) { return transpose_b ? j * k_dim + k : k * m + j; };

  const auto av = a.values();
  const auto bv = b.values();
  std::vector<T> out(batch * n * m);
  parallel_for(batch, [&](std::size_t s) {
    const T* ap = av.data() + s * a_stride;
    const T* bp = bv.data() + s * b_stride;
    // Row-major copies so the inner loop runs over contiguous memory.
    std::vector<T> arow(n * k_dim);
    std::vector<T> bcol(m * k_dim);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < k_dim; ++k) arow[i * k_dim + k] = ap[a_at(i, k)];
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < k_dim; ++k) bcol[j * k_dim + k] = bp[b_at(k, j)];
    T* op = out.data() + s * n * m;
    for (std::size_t i = 0; i < n; ++i) {
      const T* ar = arow.data() + i * k_dim;
      for (std::size_t j = 0; j < m; ++j) {
        const T* bc = bcol.data() + j * k_dim;
        double acc = 0.0;
        for (std::size_t k = 0; k < k_dim; ++k) acc += static_cast<double>(ar[k]) * bc[k];
        op[i * m + j] = static_cast<T>(acc);
      }
    }
  });
  if (counter) counter->add(kernel, n, k_dim, static_cast<std::uint64_t>(batch) * n * m * k_dim);

  return Tn<T>::from_op(
      {batch, n, m}, std::move(out), {&a, &b},
      [an = a.node(), bn = b.node(), batch, n, m, k_dim, a_stride, b_stride, a_at,
       b_at](const std::vector<T>& g) {
        auto* ga = grad_sink(an);
        auto* gb = grad_sink(bn);
        const auto& av = an->data;
        const auto& bv = bn->data;
        parallel_for(batch, [&](std::size_t s) {
          const T* gp = g.data() + s * n * m;
          const T* ap = av.data() + s * a_stride;
          const T* bp = bv.data() + s * b_stride;
          if (ga) {
            T* gap = ga->data() + s * a_stride;
            for (std::size_t i = 0; i < n; ++i) {
              for (std::size_t k = 0; k < k_dim; ++k) {
                double acc = 0.0;
                for (std::size_t j = 0; j < m; ++j) acc += static_cast<double>(gp[i * m + j]) * bp[b_at(k, j)];
                gap[a_at(i, k)] += static_cast<T>(acc);
              }
            }
          }
          if (gb) {
            T* gbp = gb->data() + s * b_stride;
            for (std::size_t k = 0; k < k_dim; ++k) {
              for (std::size_t j = 0; j < m; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(ap[a_at(i, k)]) * gp[i * m + j];
                gbp[b_at(k, j)] += static_cast<T>(acc);
              }
            }
          }
        });
      });
}

template <typename T>
Tn<T> reshape(const Tn<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<T> out(a.values().begin(), a.values().end());
  return Tn<T>::from_op(std::move(shape), std::move(out), {&a},
                        [an = a.node()](const std::vector<T>& g) {
                          if (auto* ga = grad_sink(an)) {
                            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                          }
                        });
}

template <typename T>
Tn<T> gather(const Tn<T>& a, std::shared_ptr<const std::vector<std::int64_t>> index, Shape shape) {
  if (shape_numel(shape) != index->size()) {
    throw DimensionError("gather: index of length " + std::to_string(index->size()) +
                         " for shape " + shape_str(shape));
  }
  const auto av = a.values();
  std::vector<T> out(index->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto src = (*index)[i];
    if (src >= static_cast<std::int64_t>(av.size())) {
      throw DimensionError("gather: source index " + std::to_string(src) + " out of range");
    }
    out[i] = src < 0 ? T(0) : av[static_cast<std::size_t>(src)];
  }
  return Tn<T>::from_op(std::move(shape), std::move(out), {&a},
                        [an = a.node(), index](const std::vector<T>& g) {
                          if (auto* ga = grad_sink(an)) {
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              const auto src = (*index)[i];
                              if (src >= 0) (*ga)[static_cast<std::size_t>(src)] += g[i];
                            }
                          }
                        });
}

template <typename T>
Tn<T> gather(const Tn<T>& a, std::vector<std::int64_t> index, Shape shape) {
  return gather(a, std::make_shared<const std::vector<std::int64_t>>(std::move(index)),
                std::move(shape));
}

template <typename T>
Tn<T> concat_last(const std::vector<Tn<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_last: no inputs");
  const Shape& first = parts.front().shape();
  const std::size_t rows = parts.front().numel() / first.back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      throw DimensionError("concat_last: " + shape_str(s) + " vs " + shape_str(first));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  std::vector<T> out(rows * total);
  std::size_t col = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto pv = parts[p].values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.begin() + r * widths[p], widths[p], out.begin() + r * total + col);
    }
    col += widths[p];
  }
  Shape shape = first;
  shape.back() = total;
  std::vector<typename Tn<T>::NodePtr> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return Tn<T>::from_op(std::move(shape), std::move(out), parts,
                        [nodes, widths, rows, total](const std::vector<T>& g) {
                          std::size_t c = 0;
                          for (std::size_t p = 0; p < nodes.size(); ++p) {
                            if (auto* gp = grad_sink(nodes[p])) {
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t j = 0; j < widths[p]; ++j)
                                  (*gp)[r * widths[p] + j] += g[r * total + c + j];
                            }
                            c += widths[p];
                          }
                        });
}

template <typename T>
Tn<T> slice_last(const Tn<T>& a, std::size_t start, std::size_t length) {
  const std::size_t width = a.shape().back();
  if (start + length > width) {
    throw DimensionError("slice_last: [" + std::to_string(start) + ", +" + std::to_string(length) +
                         ") exceeds " + std::to_string(width));
  }
  const std::size_t rows = a.numel() / width;
  std::vector<std::int64_t> idx(rows * length);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < length; ++j)
      idx[r * length + j] = static_cast<std::int64_t>(r * width + start + j);
  Shape shape = a.shape();
  shape.back() = length;
  return gather(a, std::move(idx), std::move(shape));
}

template <typename T>
Tn<T> transpose_last2(const Tn<T>& a) {
  if (a.rank() < 2) throw DimensionError("transpose_last2 on " + shape_str(a.shape()));
  const std::size_t rows = a.dim(a.rank() - 2);
  const std::size_t cols = a.dim(a.rank() - 1);
  const std::size_t batch = a.numel() / (rows * cols);
  std::vector<std::int64_t> idx(a.numel());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t i = 0; i < rows; ++i)
        idx[b * rows * cols + j * rows + i] = static_cast<std::int64_t>(b * rows * cols + i * cols + j);
  Shape shape = a.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  return gather(a, std::move(idx), std::move(shape));
}

template <typename T>
Tn<T> sum_all(const Tn<T>& a) {
  double acc = 0.0;
  for (auto v : a.values()) acc += v;
  return Tn<T>::from_op({1}, {static_cast<T>(acc)}, {&a}, [an = a.node()](const std::vector<T>& g) {
    if (auto* ga = grad_sink(an)) {
      for (auto& v : *ga) v += g[0];
    }
  });
}

template <typename T>
Tn<T> mean_all(const Tn<T>& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

template <typename T>
Tn<T> sum_axis(const Tn<T>& a, std::size_t axis, bool keepdim) {
  const Shape& s = a.shape();
  if (axis >= s.size()) throw DimensionError("sum_axis: axis out of range for " + shape_str(s));
  const std::size_t outer = prod(s, 0, axis);
  const std::size_t n = s[axis];
  const std::size_t inner = prod(s, axis + 1, s.size());
  const auto av = a.values();
  std::vector<T> out(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += av[(o * n + k) * inner + i];
      out[o * inner + i] = static_cast<T>(acc);
    }
  }
  Shape shape = s;
  if (keepdim) {
    shape[axis] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (shape.empty()) shape = {1};
  }
  return Tn<T>::from_op(std::move(shape), std::move(out), {&a},
                        [an = a.node(), outer, n, inner](const std::vector<T>& g) {
                          if (auto* ga = grad_sink(an)) {
                            for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t k = 0; k < n; ++k)
                                for (std::size_t i = 0; i < inner; ++i)
                                  (*ga)[(o * n + k) * inner + i] += g[o * inner + i];
                          }
                        });
}

template <typename T>
Tn<T> mean_axis(const Tn<T>& a, std::size_t axis, bool keepdim) {
  return scale(sum_axis(a, axis, keepdim), 1.0 / static_cast<double>(a.dim(axis)));
}

template <typename T>
Tn<T> softmax_last(const Tn<T>& a) {
  const std::size_t width = a.shape().back();
  const std::size_t rows = a.numel() / width;
  const auto av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * width;
    T* y = out.data() + r * width;
    const T mx = *std::max_element(x, x + width);
    double sum = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      const double e = std::exp(static_cast<double>(x[j]) - mx);
      y[j] = static_cast<T>(e);
      sum += e;
    }
    for (std::size_t j = 0; j < width; ++j) y[j] = static_cast<T>(y[j] / sum);
  }
  auto result = Tn<T>::from_op(a.shape(), std::move(out), {&a}, nullptr);
  if (result.requires_grad()) {
    std::weak_ptr<detail::Node<T>> self = result.node();
    result.node()->backward = [an = a.node(), self, rows, width](const std::vector<T>& g) {
      auto* ga = grad_sink(an);
      auto out_node = self.lock();
      if (!ga || !out_node) return;
      const auto& y = out_node->data;
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < width; ++j) dot += static_cast<double>(g[r * width + j]) * y[r * width + j];
        for (std::size_t j = 0; j < width; ++j) {
          const std::size_t i = r * width + j;
          (*ga)[i] += static_cast<T>(y[i] * (g[i] - dot));
        }
      }
    };
  }
  return result;
}

template <typename T>
Tn<T> log_softmax_last(const Tn<T>& a) {
  const std::size_t width = a.shape().back();
  const std::size_t rows = a.numel() / width;
  const auto av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * width;
    const T mx = *std::max_element(x, x + width);
    double sum = 0.0;
    for (std::size_t j = 0; j < width; ++j) sum += std::exp(static_cast<double>(x[j]) - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = static_cast<T>(x[j] - lse);
  }
  auto result = Tn<T>::from_op(a.shape(), std::move(out), {&a}, nullptr);
  if (result.requires_grad()) {
    std::weak_ptr<detail::Node<T>> self = result.node();
    result.node()->backward = [an = a.node(), self, rows, width](const std::vector<T>& g) {
      auto* ga = grad_sink(an);
      auto out_node = self.lock();
      if (!ga || !out_node) return;
      const auto& y = out_node->data;
      for (std::size_t r = 0; r < rows; ++r) {
        double gsum = 0.0;
        for (std::size_t j = 0; j < width; ++j) gsum += g[r * width + j];
        for (std::size_t j = 0; j < width; ++j) {
          const std::size_t i = r * width + j;
          (*ga)[i] += static_cast<T>(g[i] - std::exp(static_cast<double>(y[i])) * gsum);
        }
      }
    };
  }
  return result;
}

template <typename T>
Tn<T> layer_norm_last(const Tn<T>& a, double eps) {
  const std::size_t width = a.shape().back();
  if (width == 0) throw DimensionError("layer_norm on empty last axis");
  const std::size_t rows = a.numel() / width;
  const auto av = a.values();
  std::vector<T> out(av.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * width;
    double mean = 0.0;
    for (std::size_t j = 0; j < width; ++j) mean += x[j];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(width);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = static_cast<T>((x[j] - mean) * inv);
  }
  auto result = Tn<T>::from_op(a.shape(), std::move(out), {&a}, nullptr);
  if (result.requires_grad()) {
    std::weak_ptr<detail::Node<T>> self = result.node();
    result.node()->backward = [an = a.node(), self, rows, width, inv_std](const std::vector<T>& g) {
      auto* ga = grad_sink(an);
      auto out_node = self.lock();
      if (!ga || !out_node) return;
      const auto& y = out_node->data;
      for (std::size_t r = 0; r < rows; ++r) {
        double gmean = 0.0;
        double gymean = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
          gmean += g[r * width + j];
          gymean += static_cast<double>(g[r * width + j]) * y[r * width + j];
        }
        gmean /= static_cast<double>(width);
        gymean /= static_cast<double>(width);
        for (std::size_t j = 0; j < width; ++j) {
          const std::size_t i = r * width + j;
          (*ga)[i] += static_cast<T>((*inv_std)[r] * (g[i] - gmean - y[i] * gymean));
        }
      }
    };
  }
  return result;
}

template <typename T>
Tn<T> conv2d(const Tn<T>& x, const Tn<T>& kernel, std::size_t dilation) {
  if (x.rank() != 3 || kernel.rank() != 4) {
    throw DimensionError("conv2d: expected [H,W,C] input and [kh,kw,Cin,Cout] kernel, got " +
                         shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
  }
  const std::size_t H = x.dim(0), W = x.dim(1), Ci = x.dim(2);
  const std::size_t KH = kernel.dim(0), KW = kernel.dim(1), Co = kernel.dim(3);
  if (kernel.dim(2) != Ci) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kernel.dim(2)) +
                         " input channels, input has " + std::to_string(Ci));
  }
  if (KH % 2 == 0 || KW % 2 == 0) throw DimensionError("conv2d: kernel extent must be odd");
  if (dilation == 0) throw DimensionError("conv2d: dilation must be positive");
  const auto rh = static_cast<std::ptrdiff_t>(KH / 2);
  const auto rw = static_cast<std::ptrdiff_t>(KW / 2);
  const auto dil = static_cast<std::ptrdiff_t>(dilation);
  const auto xv = x.values();
  const auto kv = kernel.values();
  std::vector<T> out(H * W * Co);

  parallel_for(H, [&](std::size_t h) {
    std::vector<double> acc(Co);
    for (std::size_t w = 0; w < W; ++w) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(KH); ++a) {
        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(h) + (a - rh) * dil;
        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
        for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(KW); ++b) {
          const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(w) + (b - rw) * dil;
          if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
          const T* xp = xv.data() + (static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)) * Ci;
          const T* kp = kv.data() + (static_cast<std::size_t>(a) * KW + static_cast<std::size_t>(b)) * Ci * Co;
          for (std::size_t ci = 0; ci < Ci; ++ci) {
            const double v = xp[ci];
            if (v == 0.0) continue;
            const T* kr = kp + ci * Co;
            for (std::size_t co = 0; co < Co; ++co) acc[co] += v * kr[co];
          }
        }
      }
      for (std::size_t co = 0; co < Co; ++co) out[(h * W + w) * Co + co] = static_cast<T>(acc[co]);
    }
  });

  return Tn<T>::from_op(
      {H, W, Co}, std::move(out), {&x, &kernel},
      [xn = x.node(), kn = kernel.node(), H, W, Ci, KH, KW, Co, rh, rw, dil](const std::vector<T>& g) {
        auto* gx = grad_sink(xn);
        auto* gk = grad_sink(kn);
        const auto& xv = xn->data;
        const auto& kv = kn->data;
        std::vector<double> kacc(gk ? gk->size() : 0, 0.0);
        for (std::size_t h = 0; h < H; ++h) {
          for (std::size_t w = 0; w < W; ++w) {
            const T* gp = g.data() + (h * W + w) * Co;
            for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(KH); ++a) {
              const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(h) + (a - rh) * dil;
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(KW); ++b) {
                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(w) + (b - rw) * dil;
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                const std::size_t xoff = (static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)) * Ci;
                const std::size_t koff = (static_cast<std::size_t>(a) * KW + static_cast<std::size_t>(b)) * Ci * Co;
                for (std::size_t ci = 0; ci < Ci; ++ci) {
                  const T* kr = kv.data() + koff + ci * Co;
                  if (gx) {
                    double acc = 0.0;
                    for (std::size_t co = 0; co < Co; ++co) acc += static_cast<double>(gp[co]) * kr[co];
                    (*gx)[xoff + ci] += static_cast<T>(acc);
                  }
                  if (gk) {
                    const double xval = xv[xoff + ci];
                    if (xval == 0.0) continue;
                    double* kr_acc = kacc.data() + koff + ci * Co;
                    for (std::size_t co = 0; co < Co; ++co) kr_acc[co] += xval * gp[co];
                  }
                }
              }
            }
          }
        }
        if (gk) {
          for (std::size_t i = 0; i < kacc.size(); ++i) (*gk)[i] += static_cast<T>(kacc[i]);
        }
      });
}

namespace {
struct Tap {
  std::size_t lo, hi;
  double w_lo, w_hi;
};

// Half-pixel-centre source taps for one axis, clamped at the borders.
std::vector<Tap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    const double f = src - static_cast<double>(lo);
    taps[o] = {lo, hi, 1.0 - f, f};
  }
  return taps;
}
}  // namespace

template <typename T>
Tn<T> resize_bilinear(const Tn<T>& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 3) throw DimensionError("resize_bilinear: expected [H,W,C], got " + shape_str(x.shape()));
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (H == out_h && W == out_w) return reshape(x, x.shape());
  auto ty = std::make_shared<std::vector<Tap>>(resize_taps(H, out_h));
  auto tx = std::make_shared<std::vector<Tap>>(resize_taps(W, out_w));
  const auto xv = x.values();
  std::vector<T> out(out_h * out_w * C);
  for (std::size_t oh = 0; oh < out_h; ++oh) {
    const Tap& a = (*ty)[oh];
    for (std::size_t ow = 0; ow < out_w; ++ow) {
      const Tap& b = (*tx)[ow];
      const T* p00 = xv.data() + (a.lo * W + b.lo) * C;
      const T* p01 = xv.data() + (a.lo * W + b.hi) * C;
      const T* p10 = xv.data() + (a.hi * W + b.lo) * C;
      const T* p11 = xv.data() + (a.hi * W + b.hi) * C;
      T* o = out.data() + (oh * out_w + ow) * C;
      for (std::size_t c = 0; c < C; ++c) {
        o[c] = static_cast<T>(a.w_lo * (b.w_lo * p00[c] + b.w_hi * p01[c]) +
                              a.w_hi * (b.w_lo * p10[c] + b.w_hi * p11[c]));
      }
    }
  }
  return Tn<T>::from_op({out_h, out_w, C}, std::move(out), {&x},
                        [xn = x.node(), ty, tx, W, C, out_h, out_w](const std::vector<T>& g) {
                          auto* gx = grad_sink(xn);
                          if (!gx) return;
                          for (std::size_t oh = 0; oh < out_h; ++oh) {
                            const Tap& a = (*ty)[oh];
                            for (std::size_t ow = 0; ow < out_w; ++ow) {
                              const Tap& b = (*tx)[ow];
                              const T* gp = g.data() + (oh * out_w + ow) * C;
                              const std::array<std::pair<std::size_t, double>, 4> corners{{
                                  {(a.lo * W + b.lo) * C, a.w_lo * b.w_lo},
                                  {(a.lo * W + b.hi) * C, a.w_lo * b.w_hi},
                                  {(a.hi * W + b.lo) * C, a.w_hi * b.w_lo},
                                  {(a.hi * W + b.hi) * C, a.w_hi * b.w_hi},
                              }};
                              for (const auto& [off, wgt] : corners) {
                                if (wgt == 0.0) continue;
                                for (std::size_t c = 0; c < C; ++c) (*gx)[off + c] += static_cast<T>(wgt * gp[c]);
                              }
                            }
                          }
                        });
}

template <typename T>
Tn<T> bce_with_logits(const Tn<T>& logits, std::span<const T> targets) {
  if (targets.size() != logits.numel()) {
    throw DimensionError("bce_with_logits: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(logits.numel()) + " logits");
  }
  auto tgt = std::make_shared<std::vector<T>>(targets.begin(), targets.end());
  const auto xv = logits.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = xv[i];
    out[i] = static_cast<T>(std::max(x, 0.0) - x * (*tgt)[i] + std::log1p(std::exp(-std::abs(x))));
  }
  return Tn<T>::from_op(logits.shape(), std::move(out), {&logits},
                        [xn = logits.node(), tgt](const std::vector<T>& g) {
                          auto* gx = grad_sink(xn);
                          if (!gx) return;
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            const double x = xn->data[i];
                            const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                            (*gx)[i] += static_cast<T>(g[i] * (s - (*tgt)[i]));
                          }
                        });
}

#define WINBEV_INSTANTIATE_OPS(T)                                                                 \
  template Tn<T> add<T>(const Tn<T>&, const Tn<T>&);                                               \
  template Tn<T> sub<T>(const Tn<T>&, const Tn<T>&);                                               \
  template Tn<T> mul<T>(const Tn<T>&, const Tn<T>&);                                               \
  template Tn<T> div<T>(const Tn<T>&, const Tn<T>&);                                               \
  template Tn<T> scale<T>(const Tn<T>&, double);                                                   \
  template Tn<T> add_scalar<T>(const Tn<T>&, double);                                              \
  template Tn<T> relu<T>(const Tn<T>&);                                                            \
  template Tn<T> elu_plus_one<T>(const Tn<T>&);                                                    \
  template Tn<T> exp<T>(const Tn<T>&);                                                             \
  template Tn<T> log<T>(const Tn<T>&);                                                             \
  template Tn<T> sigmoid<T>(const Tn<T>&);                                                         \
  template Tn<T> sin<T>(const Tn<T>&);                                                             \
  template Tn<T> cos<T>(const Tn<T>&);                                                             \
  template Tn<T> sqrt<T>(const Tn<T>&);                                                            \
  template Tn<T> square<T>(const Tn<T>&);                                                          \
  template Tn<T> matmul<T>(const Tn<T>&, const Tn<T>&);                                            \
  template Tn<T> bmm<T>(const Tn<T>&, const Tn<T>&, bool, bool, OpCounter*, const std::string&);   \
  template Tn<T> reshape<T>(const Tn<T>&, Shape);                                                  \
  template Tn<T> gather<T>(const Tn<T>&, std::shared_ptr<const std::vector<std::int64_t>>, Shape); \
  template Tn<T> gather<T>(const Tn<T>&, std::vector<std::int64_t>, Shape);                        \
  template Tn<T> concat_last<T>(const std::vector<Tn<T>>&);                                        \
  template Tn<T> slice_last<T>(const Tn<T>&, std::size_t, std::size_t);                            \
  template Tn<T> transpose_last2<T>(const Tn<T>&);                                                 \
  template Tn<T> sum_all<T>(const Tn<T>&);                                                         \
  template Tn<T> mean_all<T>(const Tn<T>&);                                                        \
  template Tn<T> sum_axis<T>(const Tn<T>&, std::size_t, bool);                                     \
  template Tn<T> mean_axis<T>(const Tn<T>&, std::size_t, bool);                                    \
  template Tn<T> softmax_last<T>(const Tn<T>&);                                                    \
  template Tn<T> log_softmax_last<T>(const Tn<T>&);                                                \
  template Tn<T> layer_norm_last<T>(const Tn<T>&, double);                                         \
  template Tn<T> conv2d<T>(const Tn<T>&, const Tn<T>&, std::size_t);                               \
  template Tn<T> resize_bilinear<T>(const Tn<T>&, std::size_t, std::size_t);                       \
  template Tn<T> bce_with_logits<T>(const Tn<T>&, std::span<const T>);

WINBEV_INSTANTIATE_OPS(float)
WINBEV_INSTANTIATE_OPS(double)

}  // namespace winbev::ops
