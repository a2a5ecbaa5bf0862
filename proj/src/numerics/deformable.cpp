// SPDX-License-Identifier: Apache-2.0
#include <array>
#include <cmath>

#include "winbev/errors.hpp"
#include "winbev/numerics/ops.hpp"

namespace winbev::ops {

namespace {

struct Corner {
  std::ptrdiff_t row, col;
  double weight;
  double dwdx, dwdy;
};

// Bilinear corners of (x, y) in pixel coordinates, including out-of-range ones.
std::array<Corner, 4> bilinear_corners(double x, double y) {
  const double x0 = std::floor(x);
  const double y0 = std::floor(y);
  const double fx = x - x0;
  const double fy = y - y0;
  const auto c0 = static_cast<std::ptrdiff_t>(x0);
  const auto r0 = static_cast<std::ptrdiff_t>(y0);
  return {{
      {r0, c0, (1 - fy) * (1 - fx), -(1 - fy), -(1 - fx)},
      {r0, c0 + 1, (1 - fy) * fx, (1 - fy), -fx},
      {r0 + 1, c0, fy * (1 - fx), -fy, (1 - fx)},
      {r0 + 1, c0 + 1, fy * fx, fy, fx},
  }};
}

}  // namespace

template <typename T>
Tn<T> deformable_sample(const std::vector<Tn<T>>& levels, std::span<const double> ref_xy,
                        const Tn<T>& offsets, const Tn<T>& weights, std::size_t heads) {
  if (levels.empty()) throw DimensionError("deformable_sample: no levels");
  const std::size_t L = levels.size();
  const std::size_t D = levels[0].dim(2);
  for (const auto& lv : levels) {
    if (lv.rank() != 3 || lv.dim(2) != D) {
      throw DimensionError("deformable_sample: level shape " + shape_str(lv.shape()) +
                           " incompatible with channel width " + std::to_string(D));
    }
  }
  if (heads == 0 || D % heads != 0) {
    throw DimensionError("deformable_sample: " + std::to_string(D) + " channels not divisible by " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t nq = ref_xy.size() / 2;
  if (offsets.rank() != 5 || offsets.dim(0) != nq || offsets.dim(1) != heads || offsets.dim(2) != L ||
      offsets.dim(4) != 2) {
    throw DimensionError("deformable_sample: offsets shape " + shape_str(offsets.shape()));
  }
  const std::size_t P = offsets.dim(3);
  if (weights.shape() != Shape{nq, heads, L * P}) {
    throw DimensionError("deformable_sample: weights shape " + shape_str(weights.shape()));
  }
  const std::size_t dh = D / heads;

  std::vector<std::size_t> hs(L), ws(L);
  for (std::size_t l = 0; l < L; ++l) {
    hs[l] = levels[l].dim(0);
    ws[l] = levels[l].dim(1);
  }
  auto refs = std::make_shared<std::vector<double>>(ref_xy.begin(), ref_xy.end());

  // Visits every (query, head, level, point) sample with its pixel position.
  auto for_each_sample = [=](const std::vector<T>& off, auto&& fn) {
    for (std::size_t q = 0; q < nq; ++q) {
      for (std::size_t m = 0; m < heads; ++m) {
        for (std::size_t l = 0; l < L; ++l) {
          for (std::size_t p = 0; p < P; ++p) {
            const std::size_t o = (((q * heads + m) * L + l) * P + p) * 2;
            const double x = (*refs)[2 * q] * static_cast<double>(ws[l]) - 0.5 + off[o];
            const double y = (*refs)[2 * q + 1] * static_cast<double>(hs[l]) - 0.5 + off[o + 1];
            fn(q, m, l, p, o, x, y);
          }
        }
      }
    }
  };

  std::vector<T> out(nq * D, T(0));
  {
    std::vector<const T*> lv(L);
    for (std::size_t l = 0; l < L; ++l) lv[l] = levels[l].values().data();
    const auto& off = offsets.node()->data;
    const auto& wv = weights.node()->data;
    std::vector<double> acc(dh);
    for_each_sample(off, [&](std::size_t q, std::size_t m, std::size_t l, std::size_t p, std::size_t,
                             double x, double y) {
      const double a = wv[(q * heads + m) * L * P + l * P + p];
      std::fill(acc.begin(), acc.end(), 0.0);
      for (const auto& c : bilinear_corners(x, y)) {
        if (c.row < 0 || c.col < 0 || c.row >= static_cast<std::ptrdiff_t>(hs[l]) ||
            c.col >= static_cast<std::ptrdiff_t>(ws[l]) || c.weight == 0.0) {
          continue;
        }
        const T* px = lv[l] + (static_cast<std::size_t>(c.row) * ws[l] + static_cast<std::size_t>(c.col)) * D + m * dh;
        for (std::size_t k = 0; k < dh; ++k) acc[k] += c.weight * px[k];
      }
      T* o = out.data() + q * D + m * dh;
      for (std::size_t k = 0; k < dh; ++k) o[k] += static_cast<T>(a * acc[k]);
    });
  }

  std::vector<Tn<T>> inputs = levels;
  inputs.push_back(offsets);
  inputs.push_back(weights);
  std::vector<typename Tn<T>::NodePtr> level_nodes;
  for (const auto& lv : levels) level_nodes.push_back(lv.node());

  return Tn<T>::from_op(
      {nq, D}, std::move(out), inputs,
      [=, on = offsets.node(), wn = weights.node()](const std::vector<T>& g) {
        auto* goff = grad_sink(on);
        auto* gw = grad_sink(wn);
        std::vector<std::vector<T>*> glv(L);
        for (std::size_t l = 0; l < L; ++l) glv[l] = grad_sink(level_nodes[l]);
        const auto& wv = wn->data;
        for_each_sample(on->data, [&](std::size_t q, std::size_t m, std::size_t l, std::size_t p,
                                      std::size_t o, double x, double y) {
          const std::size_t widx = (q * heads + m) * L * P + l * P + p;
          const double a = wv[widx];
          const T* gq = g.data() + q * D + m * dh;
          const auto& vals = level_nodes[l]->data;
          double d_a = 0.0, d_x = 0.0, d_y = 0.0;
          for (const auto& c : bilinear_corners(x, y)) {
            if (c.row < 0 || c.col < 0 || c.row >= static_cast<std::ptrdiff_t>(hs[l]) ||
                c.col >= static_cast<std::ptrdiff_t>(ws[l])) {
              continue;
            }
            const std::size_t base =
                (static_cast<std::size_t>(c.row) * ws[l] + static_cast<std::size_t>(c.col)) * D + m * dh;
            double gv = 0.0;  // <g, v> over this head's channels
            for (std::size_t k = 0; k < dh; ++k) gv += static_cast<double>(gq[k]) * vals[base + k];
            d_a += c.weight * gv;
            d_x += c.dwdx * gv;
            d_y += c.dwdy * gv;
            if (glv[l] && c.weight != 0.0) {
              for (std::size_t k = 0; k < dh; ++k) (*glv[l])[base + k] += static_cast<T>(a * c.weight * gq[k]);
            }
          }
          if (gw) (*gw)[widx] += static_cast<T>(d_a);
          if (goff) {
            (*goff)[o] += static_cast<T>(a * d_x);
            (*goff)[o + 1] += static_cast<T>(a * d_y);
          }
        });
      });
}

template Tn<float> deformable_sample<float>(const std::vector<Tn<float>>&, std::span<const double>,
                                            const Tn<float>&, const Tn<float>&, std::size_t);
template Tn<double> deformable_sample<double>(const std::vector<Tn<double>>&, std::span<const double>,
                                              const Tn<double>&, const Tn<double>&, std::size_t);

}  // namespace winbev::ops
