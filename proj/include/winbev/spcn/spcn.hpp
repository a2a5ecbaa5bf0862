// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "winbev/afn/ggit.hpp"
#include "winbev/numerics/layers.hpp"
#include "winbev/numerics/op_counter.hpp"

namespace winbev {

/// Non-overlapping M x M windows of an H x W map, stored [K, M*M, C] in
/// row-major window order with row-major tokens inside each window.
struct WindowSet {
  Tensor windows;
  std::size_t height = 0, width = 0, size = 0;

  std::size_t count() const { return windows.dim(0); }
};

// Throws PartitionError unless M divides H and W.
WindowSet partition(const Tensor& feature, std::size_t window);
Tensor unpartition(const WindowSet& ws);

/// Gathers each 2x2 neighbourhood into [H/2, W/2, 4C], concatenated in
/// (0,0), (1,0), (0,1), (1,1) order. Throws DimensionError on odd extents.
Tensor merge_neighbourhoods(const Tensor& feature);

struct SwbBlock {
  LayerNorm norm1;
  Linear qkv;
  Linear proj;
  LayerNorm norm2;
  Linear ffn1, ffn2;
  std::size_t heads = 1;
  bool normalize = true;

  SwbBlock() = default;
  SwbBlock(ParamStore& store, const std::string& name, std::size_t channels, std::size_t heads,
           std::size_t ffn_ratio, bool normalize, Initializer& init);
};

/// X' = X + MSA(LN(X)); out = X' + FFN(LN(X')) on [K, T, C] windows, with linear
/// attention inside each head. Throws ConfigError if heads do not divide C.
Tensor swb_forward(const Tensor& windows, const SwbBlock& block, OpCounter* counter = nullptr);

struct GgitInjection {
  Linear query, key, value, proj;

  GgitInjection() = default;
  GgitInjection(ParamStore& store, const std::string& name, std::size_t channels, std::size_t token_width,
                Initializer& init);
};

/// S + Proj(softmax cross-attention from window tokens to the GGIT tokens).
Tensor ggit_inject(const Tensor& windows, const GGITokens& ggit, const GgitInjection& params);

struct PatchMerge {
  Linear reduction;  // 4C -> 2C

  PatchMerge() = default;
  PatchMerge(ParamStore& store, const std::string& name, std::size_t channels, Initializer& init);
  Tensor operator()(const Tensor& feature) const;
};

struct SpcnConfig {
  std::size_t channels = 64;  // C of the BEV input
  std::size_t window = 8;     // M1
  std::array<std::size_t, 4> depths{2, 2, 2, 2};
  std::size_t heads = 4;
  std::size_t ffn_ratio = 4;
  bool normalize = true;
};

inline constexpr std::size_t kStages = 4;

/// Stage l (1-based) sees an (H / 2^(l-1)) x (W / 2^(l-1)) map with windows of
/// M1 / 2^(l-1). Throws ConfigError naming the first stage that cannot run.
void validate_spcn(std::size_t height, std::size_t width, const SpcnConfig& config);

struct StagePyramid {
  std::array<Tensor, kStages> levels;  // F1..F4, [H/2^l, W/2^l, C*2^l]
};

class Spcn {
 public:
  Spcn() = default;
  Spcn(ParamStore& store, const std::string& name, const SpcnConfig& config, std::size_t token_width,
       Initializer& init);

  StagePyramid forward(const Tensor& bev, const GGITokens& ggit, OpCounter* counter = nullptr) const;

  const SpcnConfig& config() const { return config_; }

  struct Stage {
    std::vector<SwbBlock> blocks;
    GgitInjection inject;
    PatchMerge merge;
  };
  const Stage& stage(std::size_t l) const { return stages_[l]; }

 private:
  SpcnConfig config_;
  std::array<Stage, kStages> stages_;
};

}  // namespace winbev
