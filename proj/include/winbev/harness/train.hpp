// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "winbev/harness/model.hpp"
#include "winbev/pointcloud/synth.hpp"

namespace winbev {

struct GeneratedScene {
  std::string id;
  SceneSpec spec;
  SyntheticScene scene;
};

/// `count` random scenes on the configured raster. Scene i draws its layout and
/// points from seeds derived from (seed, i) only.
std::vector<GeneratedScene> generate_scenes(const PipelineConfig& config, std::size_t count, std::uint64_t seed);

struct TrainingExample {
  SparseVoxelGrid grid;
  std::vector<GroundTruthInstance> gts;
};

std::vector<TrainingExample> training_set(const Model& model, const std::vector<GeneratedScene>& scenes);

struct TrainResult {
  std::vector<double> losses;  // full-batch loss before each update
  double final_loss = 0;       // after the last update
  double seconds = 0;
};

using StepCallback = std::function<void(std::size_t step, double loss)>;

/// Full-batch descent on the summed set loss of every example. The global
/// gradient norm is clipped to `clip_norm` before each update. Throws
/// TrainingError carrying the step index when the loss turns non-finite.
TrainResult train_toy(Model& model, const std::vector<TrainingExample>& examples, const TrainConfig& train,
                      const StepCallback& on_step = {});

// Loss of the full batch without updating anything.
double batch_loss(const Model& model, const std::vector<TrainingExample>& examples);

std::vector<DetectedInstance> infer(const Model& model, const SparseVoxelGrid& grid);

}  // namespace winbev
