// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include "winbev/pointcloud/mask.hpp"
#include "winbev/pointcloud/pointcloud.hpp"

namespace winbev {

struct GroundTruthInstance {
  int class_id = 0;
  Mask footprint_mask;
  std::size_t full_area = 0;  // cells in the complete footprint
};

// A rectangular vehicle footprint extruded to `height` above the ground plane.
struct VehicleSpec {
  int class_id = 0;
  double cx = 0, cy = 0;  // footprint centre, metres
  double yaw = 0;         // radians, counter-clockwise from +x
  double length = 4.0;    // along the heading
  double width = 2.0;
  double height = 1.5;
};

/// Scene description. Text form, one directive per line ('#' starts a comment):
///
///     frame_id   <name>
///     ground_z   <metres>          (default -1.7; sensor sits at the origin)
///     ground_density <points/m^2>  (default 2)
///     face_density   <points/m^2>  (default 30)
///     object <class> <cx> <cy> <yaw> <length> <width> <height>
struct SceneSpec {
  std::string frame_id = "scene";
  double ground_z = -1.7;
  double ground_density = 2.0;
  double face_density = 30.0;
  std::vector<VehicleSpec> objects;
};

SceneSpec parse_scene_spec(std::istream& in);
std::string format_scene_spec(const SceneSpec& spec);

struct SyntheticScene {
  PointCloud cloud;
  std::vector<GroundTruthInstance> instances;
  // Footprint cells that received at least one visible point, per instance.
  std::vector<Mask> observed;
  std::vector<std::size_t> point_counts;  // visible points per instance
};

/// Samples LiDAR-visible surface points for the scene as seen from the origin.
/// Box faces whose outward normal points away from the sensor are skipped and
/// rays blocked by other boxes are dropped. Throws SceneError when footprints
/// overlap. Deterministic for a fixed seed.
SyntheticScene synth_scene(const SceneSpec& spec, const BevRaster& raster, std::uint64_t seed);

// Rasterises a footprint by cell-centre membership; never empty for a footprint
// that touches the raster.
Mask rasterize_footprint(const VehicleSpec& v, const BevRaster& raster);

bool footprints_overlap(const VehicleSpec& a, const VehicleSpec& b);

/// Random non-overlapping vehicles inside the raster's ROI, each guaranteed to
/// receive at least one visible point.
SceneSpec random_scene_spec(const BevRaster& raster, std::size_t min_objects, std::size_t max_objects,
                            std::uint64_t seed);

}  // namespace winbev
