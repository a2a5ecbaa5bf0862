// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "winbev/errors.hpp"
#include "winbev/pointcloud/mask.hpp"
#include "winbev/pointcloud/pointcloud.hpp"
#include "winbev/pointcloud/synth.hpp"

using namespace winbev;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "winbev_test_pointcloud";
  fs::create_directories(dir);
  return dir / name;
}

PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double spread) {
  std::uniform_real_distribution<float> x(-5, 85), y(-45, 45), z(-4, 2), r(0, 1);
  PointCloud pc;
  for (std::size_t i = 0; i < n; ++i) {
    pc.points.push_back({static_cast<float>(x(rng) * spread), static_cast<float>(y(rng) * spread), z(rng), r(rng)});
  }
  return pc;
}

}  // namespace

TEST(Frame, EmptyFileGivesEmptyCloud) {
  const auto p = scratch("empty.bin");
  std::ofstream(p, std::ios::binary).close();
  EXPECT_TRUE(load_frame(p).cloud.empty());
}

TEST(Frame, HandWrittenRecords) {
  const auto p = scratch("two.bin");
  const float rec[8] = {1.5f, -2.0f, 0.25f, 0.5f, 10.0f, 3.0f, -1.0f, 0.9f};
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(rec), sizeof rec);
  const auto pc = load_frame(p).cloud;
  ASSERT_EQ(pc.size(), 2u);
  EXPECT_EQ(pc.points[0].x, 1.5f);
  EXPECT_EQ(pc.points[0].r, 0.5f);
  EXPECT_EQ(pc.points[1].z, -1.0f);
}

TEST(Frame, RejectsPartialRecord) {
  const auto p = scratch("fifteen.bin");
  const std::string bytes(15, '\0');
  std::ofstream(p, std::ios::binary) << bytes;
  EXPECT_THROW(load_frame(p), FormatError);
  EXPECT_THROW(load_frame(scratch("missing.bin")), IoError);
}

TEST(Frame, SaveLoadRoundTrip) {
  std::mt19937_64 rng(1);
  const auto pc = random_cloud(rng, 300, 1.0);
  const auto p = scratch("round.bin");
  save_frame(p, pc);
  const auto back = load_frame(p).cloud;
  ASSERT_EQ(back.size(), pc.size());
  for (std::size_t i = 0; i < pc.size(); ++i) EXPECT_EQ(std::memcmp(&back.points[i], &pc.points[i], sizeof(Point)), 0);
}

TEST(Roi, StrictBoundsAndValidation) {
  RoiBounds roi;
  EXPECT_FALSE(roi.contains(0.0, 0.0, 0.0));
  EXPECT_TRUE(roi.contains(1e-6, 0.0, 0.0));
  RoiBounds bad = roi;
  bad.z_max = bad.z_min;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Roi, FilterMatchesPointwiseMembershipAndIsIdempotent) {
  std::mt19937_64 rng(2);
  const RoiBounds roi;
  for (int t = 0; t < 100; ++t) {
    const auto pc = random_cloud(rng, 200, 1.0);
    const auto once = roi_filter(pc, roi);
    std::size_t expected = 0;
    for (const auto& p : pc.points) {
      expected += p.x > roi.x_min && p.x < roi.x_max && p.y > roi.y_min && p.y < roi.y_max && p.z > roi.z_min &&
                  p.z < roi.z_max;
    }
    ASSERT_EQ(once.size(), expected);
    const auto twice = roi_filter(once, roi);
    ASSERT_EQ(twice.size(), once.size());
    for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(std::memcmp(&twice.points[i], &once.points[i], sizeof(Point)), 0);
  }
}

TEST(Roi, AllInsideIsIdentity) {
  PointCloud pc;
  pc.points = {{1, 1, 0, 0.1f}, {50, -20, -2, 0.2f}};
  EXPECT_EQ(roi_filter(pc, RoiBounds{}).size(), 2u);
}

TEST(Voxelize, SinglePointAndMidpoint) {
  const RoiBounds roi;
  const VoxelSize vs;
  PointCloud one;
  one.points = {{10.1f, 0.1f, -1.0f, 0.5f}};
  auto g = voxelize(one, roi, vs);
  ASSERT_EQ(g.cells.size(), 1u);
  const auto& c = g.cells.begin()->second;
  EXPECT_EQ(c.point_count, 1u);
  EXPECT_NEAR(c.mean[0], 10.1, 1e-6);
  EXPECT_DOUBLE_EQ(c.local_density, 1.0);

  PointCloud two;
  two.points = {{10.05f, 0.05f, -1.0f, 0.2f}, {10.15f, 0.15f, -0.9f, 0.4f}};
  g = voxelize(two, roi, vs);
  ASSERT_EQ(g.cells.size(), 1u);
  EXPECT_NEAR(g.cells.begin()->second.mean[0], 10.1, 1e-6);
  EXPECT_NEAR(g.cells.begin()->second.mean[2], -0.95, 1e-6);
  EXPECT_NEAR(g.cells.begin()->second.mean_reflectance, 0.3, 1e-6);
}

TEST(Voxelize, MatchesBruteForceGroupingAndConservesPoints) {
  std::mt19937_64 rng(3);
  const RoiBounds roi;
  const VoxelSize vs{2.0, 2.0, 1.0};
  for (int t = 0; t < 100; ++t) {
    const auto pc = roi_filter(random_cloud(rng, 400, 0.3), roi);
    const auto g = voxelize(pc, roi, vs);
    EXPECT_EQ(g.total_points(), pc.size());
    std::map<std::tuple<int, int, int>, std::pair<std::size_t, double>> oracle;
    for (const auto& p : pc.points) {
      const auto key = std::make_tuple(static_cast<int>(std::floor((p.x - roi.x_min) / vs.x)),
                                       static_cast<int>(std::floor((p.y - roi.y_min) / vs.y)),
                                       static_cast<int>(std::floor((p.z - roi.z_min) / vs.z)));
      oracle[key].first++;
      oracle[key].second += p.z;
    }
    ASSERT_EQ(g.cells.size(), oracle.size());
    for (const auto& [idx, stats] : g.cells) {
      const auto& o = oracle.at({idx.i, idx.j, idx.k});
      EXPECT_EQ(stats.point_count, o.first);
      EXPECT_NEAR(stats.mean[2], o.second / static_cast<double>(o.first), 1e-5);
    }
  }
}

TEST(MaskOps, AndOrAndRasterMismatch) {
  Mask a(2, 2), b(2, 2);
  a.set(0, 0);
  a.set(0, 1);
  b.set(0, 1);
  b.set(1, 1);
  EXPECT_EQ(mask_and(a, b).area(), 1u);
  EXPECT_EQ(mask_or(a, b).area(), 3u);
  EXPECT_THROW(mask_and(a, Mask(3, 2)), DimensionError);
}

TEST(Synth, NoObjectsGivesGroundOnly) {
  SceneSpec spec;
  const BevRaster raster;
  const auto s = synth_scene(spec, raster, 1);
  EXPECT_TRUE(s.instances.empty());
  EXPECT_FALSE(s.cloud.empty());
  for (const auto& p : s.cloud.points) EXPECT_NEAR(p.z, spec.ground_z, 1e-4);
}

TEST(Synth, BoxFootprintAreaMatchesAnalytic) {
  const BevRaster raster;  // 0.4 m cells
  VehicleSpec v;
  v.cx = 10;
  v.cy = 0;
  v.length = 4;
  v.width = 2;
  const auto m = rasterize_footprint(v, raster);
  const double expected = 4.0 * 2.0 / raster.cell_area();  // 50 cells
  const double boundary = 2.0 * (4.0 / raster.cell_x() + 2.0 / raster.cell_y());
  EXPECT_NEAR(static_cast<double>(m.area()), expected, boundary);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> yaw(-3.0, 3.0);
  for (int t = 0; t < 50; ++t) {
    v.yaw = yaw(rng);
    EXPECT_NEAR(static_cast<double>(rasterize_footprint(v, raster).area()), expected, boundary);
  }
}

TEST(Synth, DeterministicForSeed) {
  const BevRaster raster;
  const auto spec = random_scene_spec(raster, 2, 4, 11);
  const auto a = synth_scene(spec, raster, 5);
  const auto b = synth_scene(spec, raster, 5);
  ASSERT_EQ(a.cloud.size(), b.cloud.size());
  EXPECT_EQ(std::memcmp(a.cloud.points.data(), b.cloud.points.data(), a.cloud.size() * sizeof(Point)), 0);
  ASSERT_EQ(a.instances.size(), b.instances.size());
  for (std::size_t i = 0; i < a.instances.size(); ++i) EXPECT_EQ(a.instances[i].footprint_mask, b.instances[i].footprint_mask);
}

TEST(Synth, EveryObjectIsVisible) {
  const BevRaster raster;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto spec = random_scene_spec(raster, 2, 4, seed);
    ASSERT_GE(spec.objects.size(), 2u);
    ASSERT_LE(spec.objects.size(), 4u);
    const auto s = synth_scene(spec, raster, seed);
    for (std::size_t i = 0; i < s.instances.size(); ++i) {
      EXPECT_GT(s.point_counts[i], 0u);
      EXPECT_EQ(mask_and(s.observed[i], s.instances[i].footprint_mask), s.observed[i]);
    }
  }
}

TEST(Synth, OverlapIsRejected) {
  SceneSpec spec;
  spec.objects = {VehicleSpec{0, 10, 0, 0, 4, 2, 1.5}, VehicleSpec{0, 11, 0.5, 0.3, 4, 2, 1.5}};
  EXPECT_THROW(synth_scene(spec, BevRaster{}, 1), SceneError);
}

TEST(Synth, SpecTextRoundTripAndErrors) {
  const auto spec = random_scene_spec(BevRaster{}, 3, 3, 9);
  std::istringstream in(format_scene_spec(spec));
  const auto back = parse_scene_spec(in);
  ASSERT_EQ(back.objects.size(), spec.objects.size());
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    EXPECT_DOUBLE_EQ(back.objects[i].cx, spec.objects[i].cx);
    EXPECT_DOUBLE_EQ(back.objects[i].yaw, spec.objects[i].yaw);
  }
  std::istringstream bad("object 0 1 2\n");
  EXPECT_THROW(parse_scene_spec(bad), SceneError);
  std::istringstream unknown("colour red\n");
  EXPECT_THROW(parse_scene_spec(unknown), SceneError);
}
