// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "winbev/afn/afn.hpp"
#include "winbev/afn/ggit.hpp"
#include "winbev/errors.hpp"
#include "winbev/numerics/ops.hpp"
#include "winbev/pointcloud/synth.hpp"

using namespace winbev;

namespace {

std::vector<float> randf(std::mt19937_64& rng, std::size_t n, float sd = 1.0f) {
  std::normal_distribution<float> d(0.0f, sd);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

RoiBounds small_roi() { return {0.0, 12.8, -6.4, 6.4, -3.0, 1.0}; }
VoxelSize small_voxel() { return {0.8, 0.8, 0.5}; }

SparseVoxelGrid grid_from(const std::vector<Point>& pts) {
  PointCloud pc;
  pc.points = pts;
  return voxelize(roi_filter(pc, small_roi()), small_roi(), small_voxel());
}

AfnConfig small_config() {
  AfnConfig c;
  c.c_enc = 4;
  c.channels = 8;
  c.ggit = {3, 8, 2};
  c.height_bands = 3;
  return c;
}

}  // namespace

TEST(PlaneFeatures, EmptyGridIsZeroWithPlaneShapes) {
  const auto g = grid_from({});
  const auto e = g.extent();
  const auto xy = plane_cell_features(g, Plane::XY);
  const auto xz = plane_cell_features(g, Plane::XZ);
  const auto yz = plane_cell_features(g, Plane::YZ);
  EXPECT_EQ(xy.shape(), (Shape{std::size_t(e[0]), std::size_t(e[1]), kCellFeatureCount}));
  EXPECT_EQ(xz.shape(), (Shape{std::size_t(e[0]), std::size_t(e[2]), kCellFeatureCount}));
  EXPECT_EQ(yz.shape(), (Shape{std::size_t(e[1]), std::size_t(e[2]), kCellFeatureCount}));
  for (float v : xy.values()) EXPECT_EQ(v, 0.f);
}

TEST(PlaneFeatures, ReductionAlongZIsSymmetricForOccupancyChannels) {
  // Same column, different height: occupancy, density and reflectance agree.
  const auto low = plane_cell_features(grid_from({{5.1f, 0.1f, -2.2f, 0.4f}}), Plane::XY);
  const auto high = plane_cell_features(grid_from({{5.1f, 0.1f, -0.2f, 0.4f}}), Plane::XY);
  for (std::size_t i = 0; i < low.numel(); i += kCellFeatureCount)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(low.values()[i + k], high.values()[i + k]);
}

TEST(PlaneProjection, SingleCellSupportStaysInReceptiveField) {
  ParamStore store;
  Initializer init(3);
  Afn afn(store, "afn", small_config(), small_roi(), small_voxel(), init);
  const auto g = grid_from({{5.1f, 0.1f, -1.2f, 0.4f}});
  const auto& cell = g.cells.begin()->first;
  const auto f = afn.project_plane(g, Plane::XY).feat;
  const std::size_t w = f.dim(1), c = f.dim(2);
  for (std::size_t i = 0; i < f.dim(0); ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const bool inside = std::abs(static_cast<int>(i) - cell.i) <= 2 && std::abs(static_cast<int>(j) - cell.j) <= 2;
      if (inside) continue;
      for (std::size_t k = 0; k < c; ++k) EXPECT_EQ(f.values()[(i * w + j) * c + k], 0.f);
    }
}

TEST(TrigModulate, ZeroAlphaScalesByOneAndAHalf) {
  std::mt19937_64 rng(1);
  PlaneFeature pf{Plane::XZ, Tensor::constant({4, 3, 2}, randf(rng, 24))};
  const auto out = trig_modulate(pf, Tensor::constant({1}, {0.f}), small_roi(), small_voxel());
  for (std::size_t i = 0; i < 24; ++i) EXPECT_FLOAT_EQ(out.feat.values()[i], 1.5f * pf.feat.values()[i]);
  PlaneFeature xy{Plane::XY, pf.feat};
  EXPECT_EQ(trig_modulate(xy, Tensor::constant({1}, {0.7f}), small_roi(), small_voxel()).feat.node(), pf.feat.node());
}

TEST(TrigModulate, ScaleStaysWithinZeroAndTwo) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> a(-10, 10);
  PlaneFeature ones{Plane::YZ, Tensor::full({16, 8, 1}, 1.f)};
  for (int t = 0; t < 100; ++t) {
    const auto out = trig_modulate(ones, Tensor::constant({1}, {a(rng)}), small_roi(), small_voxel());
    for (float s : out.feat.values()) {
      EXPECT_GE(s, 0.f);
      EXPECT_LE(s, 2.f);
    }
  }
}

TEST(Denoiser, ZeroInputShapeAndResidual) {
  ParamStore store;
  Initializer init(4);
  Denoiser d(store, "dn", 3, init);
  const auto z = d(Tensor::zeros({5, 7, 3}));
  EXPECT_EQ(z.shape(), (Shape{5, 7, 3}));
  for (float v : z.values()) EXPECT_EQ(v, 0.f);
  std::mt19937_64 rng(5);
  auto x = Tensor::constant({6, 9, 3}, randf(rng, 162));
  EXPECT_EQ(d(x).shape(), x.shape());
  for (auto& e : store.entries()) fill(e.tensor, 0.f);
  const auto id = d(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(id.values()[i], x.values()[i]);
}

TEST(Gaf, IdenticalInputsGiveUniformWeightsAndFullConsistency) {
  std::mt19937_64 rng(6);
  auto f = Tensor::constant({4, 4, 3}, randf(rng, 48));
  const auto r = gaf_fuse(f, f, f, std::array<double, 3>{1, 1, 1});
  for (double w : r.weight_values()) EXPECT_NEAR(w, 1.0 / 3.0, 1e-6);
  EXPECT_NEAR(r.consistency_value(), 1.0, 1e-6);
  for (std::size_t i = 0; i < 48; ++i) EXPECT_NEAR(r.fused.values()[i], f.values()[i], 1e-5);
}

TEST(Gaf, OrthogonalInputsGiveZeroConsistency) {
  std::vector<float> a(8, 0.f), b(8, 0.f), c(8, 0.f);
  a[0] = a[1] = 1.f;
  b[2] = b[3] = 2.f;
  c[4] = c[7] = -1.f;
  const auto r = gaf_fuse(Tensor::constant({2, 2, 2}, a), Tensor::constant({2, 2, 2}, b),
                          Tensor::constant({2, 2, 2}, c), std::array<double, 3>{1, 2, 3});
  EXPECT_NEAR(r.consistency_value(), 0.0, 1e-7);
  for (float v : r.fused.values()) EXPECT_NEAR(v, 0.f, 1e-7);
}

TEST(Gaf, RejectsNonPositiveAlpha) {
  auto f = Tensor::zeros({2, 2, 1});
  EXPECT_THROW(gaf_fuse(f, f, f, std::array<double, 3>{1, 0, 1}), ParameterError);
  EXPECT_THROW(gaf_fuse(f, f, f, std::array<double, 3>{-1, 1, 1}), ParameterError);
}

TEST(Gaf, WeightSimplexPermutationEquivarianceAndConsistencyBounds) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> alpha(0.1, 5.0);
  const std::array<std::array<int, 3>, 6> perms{{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  for (int t = 0; t < 100; ++t) {
    std::array<Tensor, 3> f;
    for (std::size_t i = 0; i < 3; ++i) f[i] = Tensor::constant({3, 5, 2}, randf(rng, 30, 0.5f + i));
    const std::array<double, 3> a{alpha(rng), alpha(rng), alpha(rng)};
    const auto base = gaf_fuse(f[0], f[1], f[2], a);
    const auto w = base.weight_values();
    EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-6);
    EXPECT_GE(base.consistency_value(), -1.0 - 1e-6);
    EXPECT_LE(base.consistency_value(), 1.0 + 1e-6);
    const auto& p = perms[t % perms.size()];
    const auto r = gaf_fuse(f[p[0]], f[p[1]], f[p[2]], std::array<double, 3>{a[p[0]], a[p[1]], a[p[2]]});
    const auto wp = r.weight_values();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(wp[i], w[p[i]], 1e-6);
    EXPECT_NEAR(r.consistency_value(), base.consistency_value(), 1e-6);
  }
}

TEST(HeightEncode, ValuesAtZeroBoundsAndInjectivity) {
  const auto z0 = height_encode(0.0, 6);
  ASSERT_EQ(z0.size(), 12u);
  EXPECT_EQ(z0[0], 0.0);
  EXPECT_EQ(z0[1], 1.0);
  EXPECT_EQ(z0[2], 0.0);
  EXPECT_NEAR(z0[3], 0.6065306597, 1e-9);
  for (int k = 0; k <= 1000; ++k) {
    const auto e = height_encode(k / 1000.0, 6);
    for (std::size_t i = 0; i < e.size(); ++i) EXPECT_LE(std::abs(e[i]), i < 2 ? 1.0 : std::exp(-0.5) + 1e-12);
  }
  std::vector<std::vector<double>> codes;
  for (int k = 0; k <= 1000; ++k) codes.push_back(height_encode(k / 1000.0, 6));
  for (std::size_t i = 0; i < codes.size(); ++i)
    for (std::size_t j = i + 1; j < codes.size(); ++j) {
      double d = 0;
      for (std::size_t c = 0; c < codes[i].size(); ++c) d = std::max(d, std::abs(codes[i][c] - codes[j][c]));
      ASSERT_GT(d, 1e-6) << i << " vs " << j;
    }
}

TEST(Ggit, EmptyGridLeavesEmbeddings) {
  ParamStore store;
  Initializer init(8);
  GgitGenerator gen(store, "ggit", GgitConfig{5, 6, 2}, init);
  const auto t = gen(grid_from({}));
  ASSERT_EQ(t.tokens.shape(), (Shape{5, 6}));
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(t.tokens.values()[i], gen.embeddings().values()[i]);
  EXPECT_EQ(t.provenance.size(), 5u);
}

TEST(Ggit, TokenShapeIndependentOfScene) {
  ParamStore store;
  Initializer init(9);
  GgitGenerator gen(store, "ggit", GgitConfig{7, 4, 3}, init);
  const BevRaster raster{small_roi(), 16, 16};
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto scene = synth_scene(random_scene_spec(raster, 1, 2, s), raster, s);
    const auto t = gen(voxelize(roi_filter(scene.cloud, small_roi()), small_roi(), small_voxel()));
    EXPECT_EQ(t.tokens.shape(), (Shape{7, 4}));
  }
}

TEST(Ggit, FlatGroundPlaneFit) {
  std::vector<Point> pts;
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) pts.push_back({0.4f + 0.8f * i, -6.0f + 0.8f * j, -1.7f, 0.1f});
  const auto plane = fit_ground_plane(grid_from(pts));
  EXPECT_NEAR(plane.a, 0.0, 1e-3);
  EXPECT_NEAR(plane.b, 0.0, 1e-3);
  EXPECT_NEAR(plane.c, 1.0, 1e-3);
  EXPECT_NEAR(plane.d, -1.7, 1e-3);
  EXPECT_NEAR(plane.inlier_ratio, 1.0, 1e-9);
}

TEST(Afn, ForwardShapeNormalisationAndDeterminism) {
  ParamStore store;
  Initializer init(10);
  const auto cfg = small_config();
  Afn afn(store, "afn", cfg, small_roi(), small_voxel(), init);
  const BevRaster raster{small_roi(), 16, 16};
  const auto scene = synth_scene(random_scene_spec(raster, 1, 2, 3), raster, 3);
  const auto grid = voxelize(roi_filter(scene.cloud, small_roi()), small_roi(), small_voxel());
  const auto a = afn.forward(grid);
  const auto b = afn.forward(grid);
  ASSERT_EQ(a.bev.shape(), (Shape{16, 16, cfg.channels}));
  EXPECT_EQ(std::memcmp(a.bev.values().data(), b.bev.values().data(), a.bev.numel() * sizeof(float)), 0);
  const std::size_t c = cfg.channels;
  for (std::size_t p = 0; p < 256; ++p) {
    double m = 0, v = 0;
    for (std::size_t k = 0; k < c; ++k) m += a.bev.values()[p * c + k];
    m /= c;
    for (std::size_t k = 0; k < c; ++k) v += std::pow(a.bev.values()[p * c + k] - m, 2);
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_LE(v / c, 1.0 + 1e-3);  // below 1 only where the pre-norm spread is near eps
  }
  EXPECT_EQ(a.ggit.tokens.shape(), (Shape{3, 8}));
}

TEST(Afn, GradientsReachEveryBranch) {
  ParamStore store;
  Initializer init(11);
  Afn afn(store, "afn", small_config(), small_roi(), small_voxel(), init);
  const BevRaster raster{small_roi(), 16, 16};
  const auto scene = synth_scene(random_scene_spec(raster, 2, 2, 4), raster, 4);
  const auto out = afn.forward(voxelize(roi_filter(scene.cloud, small_roi()), small_roi(), small_voxel()));
  ops::sum_all(ops::square(out.bev)).backward();
  for (const char* n : {"afn.xz.alpha", "afn.yz.alpha", "afn.gaf.log_alpha", "afn.xy.conv1.kernel"}) {
    const Tensor* t = store.find(n);
    ASSERT_NE(t, nullptr) << n;
    EXPECT_TRUE(t->has_grad()) << n;
  }
}
