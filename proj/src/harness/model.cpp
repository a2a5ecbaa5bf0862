// SPDX-License-Identifier: Apache-2.0
#include "winbev/harness/model.hpp"

namespace winbev {

std::vector<InstancePrediction> ModelOutput::instances() const {
  const auto& pix = decoder.pixels;
  const std::size_t h = pix.mask_features.dim(0), w = pix.mask_features.dim(1);
  return materialize(decoder.layers.back(), decoder.final_embeddings, h, w);
}

namespace {

SpcnConfig spcn_config(const PipelineConfig& c) {
  SpcnConfig s = c.spcn;
  s.channels = c.afn.channels;
  return s;
}

std::array<std::size_t, kStages> level_channels(std::size_t c) {
  std::array<std::size_t, kStages> out{};
  for (std::size_t l = 0; l < kStages; ++l) out[l] = c << (l + 1);
  return out;
}

}  // namespace

Model::Model(const PipelineConfig& config) : config_(config) {
  config_.validate();
  Initializer init(config_.seed);
  afn_ = Afn(store_, "afn", config_.afn, config_.roi, config_.voxel, init);
  spcn_ = Spcn(store_, "spcn", spcn_config(config_), config_.afn.ggit.width, init);
  decoder_ = Decoder(store_, "decoder", config_.decoder, level_channels(config_.afn.channels), config_.raster_height,
                     config_.raster_width, config_.afn.ggit.width, init);
}

SparseVoxelGrid Model::prepare(const PointCloud& cloud) const {
  return voxelize(roi_filter(cloud, config_.roi), config_.roi, config_.voxel);
}

ModelOutput Model::forward(const SparseVoxelGrid& grid, OpCounter* counter) const {
  ModelOutput out;
  out.afn = afn_.forward(grid);
  out.pyramid = spcn_.forward(out.afn.bev, out.afn.ggit, counter);
  out.decoder = decoder_.forward(out.pyramid, out.afn.ggit);
  return out;
}

}  // namespace winbev
