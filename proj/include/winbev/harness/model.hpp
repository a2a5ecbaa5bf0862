// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <vector>

#include "winbev/afn/afn.hpp"
#include "winbev/decoder/decoder.hpp"
#include "winbev/harness/config.hpp"
#include "winbev/numerics/layers.hpp"
#include "winbev/numerics/op_counter.hpp"
#include "winbev/spcn/spcn.hpp"

namespace winbev {

struct ModelOutput {
  AfnOutput afn;
  StagePyramid pyramid;
  DecoderOutput decoder;

  // Final-layer instances with class probabilities and mask logits.
  std::vector<InstancePrediction> instances() const;
};

/// AFN -> SPCN -> decoder with every parameter registered in one store.
/// Not copyable: the layers alias tensors owned by the store.
class Model {
 public:
  explicit Model(const PipelineConfig& config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  SparseVoxelGrid prepare(const PointCloud& cloud) const;
  ModelOutput forward(const SparseVoxelGrid& grid, OpCounter* counter = nullptr) const;

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const PipelineConfig& config() const { return config_; }
  const Afn& afn() const { return afn_; }
  const Spcn& spcn() const { return spcn_; }
  const Decoder& decoder() const { return decoder_; }

 private:
  PipelineConfig config_;
  ParamStore store_;
  Afn afn_;
  Spcn spcn_;
  Decoder decoder_;
};

}  // namespace winbev
