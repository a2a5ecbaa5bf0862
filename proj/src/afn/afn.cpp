// SPDX-License-Identifier: Apache-2.0
#include "winbev/afn/afn.hpp"

#include <cmath>
#include <numbers>

#include "winbev/errors.hpp"
#include "winbev/numerics/ops.hpp"

namespace winbev {

const char* plane_name(Plane p) {
  switch (p) {
    case Plane::XZ: return "xz";
    case Plane::YZ: return "yz";
    case Plane::XY: return "xy";
  }
  return "?";
}

std::array<double, 3> GafResult::weight_values() const {
  const auto w = weights.values();
  return {w[0], w[1], w[2]};
}

double GafResult::consistency_value() const { return consistency.item(); }

namespace {

std::pair<std::size_t, std::size_t> plane_extent(const SparseVoxelGrid& grid, Plane plane) {
  const auto e = grid.extent();
  const auto nx = static_cast<std::size_t>(e[0]);
  const auto ny = static_cast<std::size_t>(e[1]);
  const auto nz = static_cast<std::size_t>(e[2]);
  switch (plane) {
    case Plane::XZ: return {nx, nz};
    case Plane::YZ: return {ny, nz};
    case Plane::XY: break;
  }
  return {nx, ny};
}

bool in_extent(const VoxelIndex& idx, const std::array<int, 3>& e) {
  return idx.i >= 0 && idx.j >= 0 && idx.k >= 0 && idx.i < e[0] && idx.j < e[1] && idx.k < e[2];
}

}  // namespace

Tensor plane_cell_features(const SparseVoxelGrid& grid, Plane plane) {
  const auto [rows, cols] = plane_extent(grid, plane);
  const auto e = grid.extent();
  const auto& roi = grid.roi;
  const auto& v = grid.voxel;
  std::vector<double> acc(rows * cols * kCellFeatureCount, 0.0);
  std::vector<double> weight(rows * cols, 0.0);
  for (const auto& [idx, cell] : grid.cells) {
    if (!in_extent(idx, e)) continue;
    std::size_t a = 0, b = 0;
    switch (plane) {
      case Plane::XZ: a = static_cast<std::size_t>(idx.i); b = static_cast<std::size_t>(idx.k); break;
      case Plane::YZ: a = static_cast<std::size_t>(idx.j); b = static_cast<std::size_t>(idx.k); break;
      case Plane::XY: a = static_cast<std::size_t>(idx.i); b = static_cast<std::size_t>(idx.j); break;
    }
    const double f[kCellFeatureCount] = {
        1.0,
        cell.local_density,
        cell.mean_reflectance,
        (cell.mean[2] - roi.z_min) / (roi.z_max - roi.z_min),
        (cell.mean[0] - roi.x_min) / v.x - idx.i - 0.5,
        (cell.mean[1] - roi.y_min) / v.y - idx.j - 0.5,
        (cell.mean[2] - roi.z_min) / v.z - idx.k - 0.5,
    };
    const std::size_t pos = a * cols + b;
    const double w = cell.local_density;
    weight[pos] += w;
    for (std::size_t c = 0; c < kCellFeatureCount; ++c) acc[pos * kCellFeatureCount + c] += w * f[c];
  }
  std::vector<float> out(acc.size(), 0.0f);
  for (std::size_t pos = 0; pos < weight.size(); ++pos) {
    if (weight[pos] <= 0) continue;
    for (std::size_t c = 0; c < kCellFeatureCount; ++c) {
      out[pos * kCellFeatureCount + c] = static_cast<float>(acc[pos * kCellFeatureCount + c] / weight[pos]);
    }
  }
  return Tensor::constant({rows, cols, kCellFeatureCount}, std::move(out));
}

PlaneFeature trig_modulate(const PlaneFeature& pf, const Tensor& alpha, const RoiBounds& roi,
                           const VoxelSize& voxel) {
  if (pf.plane == Plane::XY) return pf;
  const std::size_t rows = pf.feat.dim(0);
  const std::size_t cols = pf.feat.dim(1);
  const double row_min = pf.plane == Plane::XZ ? roi.x_min : roi.y_min;
  const double row_step = pf.plane == Plane::XZ ? voxel.x : voxel.y;
  std::vector<float> a(rows * cols), b(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      a[r * cols + c] = static_cast<float>(roi.z_min + (static_cast<double>(c) + 0.5) * voxel.z);
      b[r * cols + c] = static_cast<float>(row_min + (static_cast<double>(r) + 0.5) * row_step);
    }
  }
  const auto ta = Tensor::constant({rows, cols, 1}, std::move(a));
  const auto tb = Tensor::constant({rows, cols, 1}, std::move(b));
  auto wave = ops::add(ops::sin(ops::mul(ta, alpha)), ops::cos(ops::mul(tb, alpha)));
  auto factor = ops::add_scalar(ops::scale(wave, 0.5), 1.0);
  return {pf.plane, ops::mul(pf.feat, factor)};
}

Denoiser::Denoiser(ParamStore& store, const std::string& name, std::size_t channels, Initializer& init)
    : branch1(store, name + ".dil1", channels, channels, 3, 1, init),
      branch2(store, name + ".dil2", channels, channels, 3, 2, init),
      branch4(store, name + ".dil4", channels, channels, 3, 4, init),
      fusion(store, name + ".fusion", 3 * channels, channels, 1, 1, init) {}

Tensor Denoiser::operator()(const Tensor& x) const {
  auto cat = ops::concat_last<float>({ops::relu(branch1(x)), ops::relu(branch2(x)), ops::relu(branch4(x))});
  return ops::add(fusion(cat), x);
}

namespace {

Tensor variance_all(const Tensor& x) { return ops::mean_all(ops::square(ops::sub(x, ops::mean_all(x)))); }

Tensor cosine(const Tensor& a, const Tensor& b) {
  auto dot = ops::sum_all(ops::mul(a, b));
  auto na = ops::sqrt(ops::add_scalar(ops::sum_all(ops::square(a)), 1e-12));
  auto nb = ops::sqrt(ops::add_scalar(ops::sum_all(ops::square(b)), 1e-12));
  return ops::div(dot, ops::mul(na, nb));
}

}  // namespace

GafResult gaf_fuse(const Tensor& f_xz, const Tensor& f_yz, const Tensor& f_xy, const Tensor& log_alpha) {
  if (f_xz.shape() != f_yz.shape() || f_xz.shape() != f_xy.shape()) {
    throw DimensionError("GAF inputs differ: " + shape_str(f_xz.shape()) + ", " + shape_str(f_yz.shape()) + ", " +
                         shape_str(f_xy.shape()));
  }
  if (log_alpha.numel() != 3) throw DimensionError("GAF needs three importance parameters");
  const std::array<const Tensor*, 3> f{&f_xz, &f_yz, &f_xy};
  std::vector<Tensor> vars;
  for (const auto* t : f) vars.push_back(ops::reshape(variance_all(*t), {1}));
  GafResult out;
  out.weights = ops::softmax_last(ops::sub(ops::reshape(log_alpha, {3}), ops::concat_last(vars)));
  Tensor mix;
  for (std::size_t i = 0; i < 3; ++i) {
    auto term = ops::mul(*f[i], ops::slice_last(out.weights, i, 1));
    mix = mix.defined() ? ops::add(mix, term) : term;
  }
  auto pairs = ops::add(ops::add(cosine(f_xz, f_yz), cosine(f_xz, f_xy)), cosine(f_yz, f_xy));
  out.consistency = ops::scale(pairs, 1.0 / 3.0);
  out.fused = ops::mul(mix, out.consistency);
  return out;
}

GafResult gaf_fuse(const Tensor& f_xz, const Tensor& f_yz, const Tensor& f_xy, const std::array<double, 3>& alphas) {
  std::vector<float> logs;
  for (double a : alphas) {
    if (!(a > 0)) throw ParameterError("GAF importance parameters must be positive, got " + std::to_string(a));
    logs.push_back(static_cast<float>(std::log(a)));
  }
  return gaf_fuse(f_xz, f_yz, f_xy, Tensor::constant({3}, std::move(logs)));
}

std::vector<double> height_encode(double z, std::size_t bands) {
  std::vector<double> out(2 * bands);
  const double tail = std::exp(-0.5);
  for (std::size_t l = 0; l < bands; ++l) {
    const double w = l == 0 ? 1.0 : tail;
    const double arg = std::ldexp(std::numbers::pi * z, static_cast<int>(l));
    out[2 * l] = w * std::sin(arg);
    out[2 * l + 1] = w * std::cos(arg);
  }
  return out;
}

Tensor height_stack(const SparseVoxelGrid& grid, std::size_t bands) {
  const auto e = grid.extent();
  const auto h = static_cast<std::size_t>(e[0]);
  const auto w = static_cast<std::size_t>(e[1]);
  const std::size_t width = 2 * bands;
  std::vector<double> top(h * w, -1.0);
  const auto& roi = grid.roi;
  for (const auto& [idx, cell] : grid.cells) {
    if (!in_extent(idx, e)) continue;
    const double zn = (cell.mean[2] - roi.z_min) / (roi.z_max - roi.z_min);
    auto& t = top[static_cast<std::size_t>(idx.i) * w + static_cast<std::size_t>(idx.j)];
    t = std::max(t, zn);
  }
  std::vector<float> out(h * w * width, 0.0f);
  for (std::size_t pos = 0; pos < top.size(); ++pos) {
    if (top[pos] < 0) continue;
    const auto code = height_encode(top[pos], bands);
    for (std::size_t c = 0; c < width; ++c) out[pos * width + c] = static_cast<float>(code[c]);
  }
  return Tensor::constant({h, w, width}, std::move(out));
}

Tensor resample_to_bev(const PlaneFeature& pf, std::size_t height, std::size_t width) {
  const auto& f = pf.feat;
  const std::size_t c = f.dim(2);
  if (pf.plane == Plane::XY) {
    if (f.dim(0) != height || f.dim(1) != width) {
      throw DimensionError("XY plane " + shape_str(f.shape()) + " does not match the BEV grid");
    }
    return f;
  }
  const bool along_x = pf.plane == Plane::XZ;
  if (f.dim(0) != (along_x ? height : width)) {
    throw DimensionError(std::string(plane_name(pf.plane)) + " plane " + shape_str(f.shape()) +
                         " does not match the BEV grid");
  }
  auto pooled = ops::mean_axis(f, 1);  // [A, C]
  auto index = std::make_shared<std::vector<std::int64_t>>(height * width * c);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const std::size_t src = along_x ? i : j;
      for (std::size_t k = 0; k < c; ++k) (*index)[(i * width + j) * c + k] = static_cast<std::int64_t>(src * c + k);
    }
  }
  return ops::gather(pooled, std::move(index), {height, width, c});
}

Afn::Afn(ParamStore& store, const std::string& name, const AfnConfig& config, const RoiBounds& roi,
         const VoxelSize& voxel, Initializer& init)
    : config_(config), roi_(roi), voxel_(voxel) {
  for (Plane p : {Plane::XZ, Plane::YZ, Plane::XY}) {
    auto& b = branches_[static_cast<int>(p)];
    const std::string base = name + "." + plane_name(p);
    b.conv1 = Conv2d(store, base + ".conv1", kCellFeatureCount, config.c_enc, 3, 1, init);
    b.conv2 = Conv2d(store, base + ".conv2", config.c_enc, config.c_enc, 3, 1, init);
    if (p != Plane::XY) b.alpha = store.add(base + ".alpha", Tensor::parameter({1}, {config.init_alpha}));
    b.denoise = Denoiser(store, base + ".denoise", config.c_enc, init);
  }
  log_alpha_ = store.add(name + ".gaf.log_alpha", Tensor::parameter({3}, {0.0f, 0.0f, 0.0f}));
  projection_ = Linear(store, name + ".bev_proj", config.c_enc + 2 * config.height_bands, config.channels, init);
  ggit_ = GgitGenerator(store, name + ".ggit", config.ggit, init);
}

PlaneFeature Afn::project_plane(const SparseVoxelGrid& grid, Plane plane) const {
  const auto& b = branch(plane);
  auto x = plane_cell_features(grid, plane);
  return {plane, b.conv2(ops::relu(b.conv1(x)))};
}

Tensor Afn::to_bev(const GafResult& fused, const Tensor& heights) const {
  auto cat = ops::concat_last<float>({fused.fused, heights});
  return ops::layer_norm_last(projection_(cat));
}

AfnOutput Afn::forward(const SparseVoxelGrid& grid) const {
  const auto e = grid.extent();
  const auto h = static_cast<std::size_t>(e[0]);
  const auto w = static_cast<std::size_t>(e[1]);
  std::array<Tensor, 3> planes;
  for (Plane p : {Plane::XZ, Plane::YZ, Plane::XY}) {
    const auto& b = branch(p);
    auto pf = project_plane(grid, p);
    if (p != Plane::XY) pf = trig_modulate(pf, b.alpha, roi_, voxel_);
    pf.feat = b.denoise(pf.feat);
    planes[static_cast<int>(p)] = resample_to_bev(pf, h, w);
  }
  AfnOutput out;
  out.gaf = gaf_fuse(planes[0], planes[1], planes[2], log_alpha_);
  out.bev = to_bev(out.gaf, height_stack(grid, config_.height_bands));
  out.ggit = ggit_(grid);
  return out;
}

}  // namespace winbev
