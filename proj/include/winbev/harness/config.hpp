// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>

#include "winbev/afn/afn.hpp"
#include "winbev/decoder/decoder.hpp"
#include "winbev/inference/inference.hpp"
#include "winbev/matching/losses.hpp"
#include "winbev/pointcloud/mask.hpp"
#include "winbev/pointcloud/pointcloud.hpp"
#include "winbev/spcn/spcn.hpp"

namespace winbev {

struct TrainConfig {
  std::size_t steps = 500;
  double learning_rate = 0.2;
  double clip_norm = 1.0;
  std::string optimizer = "sgd";  // "sgd" or "adam"
};

struct SceneConfig {
  std::size_t count = 3;
  std::size_t min_objects = 2;
  std::size_t max_objects = 4;
  double ground_density = 2.0;
  double face_density = 30.0;
};

/// Every tunable of the pipeline. The text form is one `section.key = value`
/// per line, '#' comments allowed; unknown keys are rejected.
struct PipelineConfig {
  RoiBounds roi;
  VoxelSize voxel{0.5, 0.5, 0.2};
  std::size_t raster_height = 160;
  std::size_t raster_width = 160;
  AfnConfig afn;
  SpcnConfig spcn;
  DecoderConfig decoder;
  LossWeights loss;
  NmsOptions nms;
  TrainConfig train;
  SceneConfig scenes;
  double visibility_floor = 0.1;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  BevRaster raster() const { return {roi, raster_height, raster_width}; }
  // Throws ConfigError naming the offending setting.
  void validate() const;
};

/// Desk-scale setting used by the toy training run: a 25.6 m square ROI on a
/// 32 x 32 raster with narrow widths.
PipelineConfig toy_config();

PipelineConfig parse_config(std::istream& in, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});
std::string format_config(const PipelineConfig& config);

}  // namespace winbev
