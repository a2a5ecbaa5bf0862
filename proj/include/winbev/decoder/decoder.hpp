// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "winbev/afn/ggit.hpp"
#include "winbev/numerics/layers.hpp"
#include "winbev/spcn/spcn.hpp"

namespace winbev {

struct DecoderConfig {
  std::size_t dim = 64;      // query and pixel width d
  std::size_t queries = 20;  // N
  std::size_t layers = 3;
  std::size_t heads = 4;
  std::size_t points = 4;      // sampling points per level and head
  std::size_t mask_dim = 64;   // E
  std::size_t classes = 1;     // K real classes; index K is "no object"
  std::size_t ffn_ratio = 4;
};

/// [rows, cols, channels] sinusoidal code of normalised cell centres. Channel
/// group f holds sin/cos of (f+1)*pi*y then sin/cos of (f+1)*pi*x; channels
/// beyond the last full group of four are zero.
Tensor positional_encoding(std::size_t rows, std::size_t cols, std::size_t channels);

/// Normalised (x, y) centres of every cell of a rows x cols map, row-major.
std::vector<double> cell_reference_points(std::size_t rows, std::size_t cols);

struct MsdaParams {
  Linear offsets;    // d -> heads * L * P * 2
  Linear attention;  // d -> heads * L * P, softmax per head
  Linear value;      // W applied to the sampled maps
  Linear output;     // W_m, per-head blocks of one d x d map
  std::size_t heads = 1, levels = 1, points = 1;

  MsdaParams() = default;
  MsdaParams(ParamStore& store, const std::string& name, std::size_t dim, std::size_t heads, std::size_t levels,
             std::size_t points, Initializer& init);
};

/// Multi-scale deformable attention for a batch of queries [Nq, d] at normalised
/// reference points (x, y). levels[l] is [H_l, W_l, d]. Returns [Nq, d].
Tensor msda(const Tensor& queries, std::span<const double> ref_xy, const std::vector<Tensor>& levels,
            const MsdaParams& params);

struct PixelFeatures {
  std::vector<Tensor> levels;  // refined maps [H_l, W_l, d]
  Tensor memory;               // all refined tokens, [sum H_l W_l, d]
  Tensor memory_pos;           // positional code of each memory token
  Tensor mask_features;        // [H, W, E]
};

struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, std::size_t dim, std::size_t kv_dim,
                     std::size_t heads, Initializer& init);

  // q_in [Nq, d]; k_in, v_in [Nk, kv_dim]. Softmax attention per head.
  Tensor operator()(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in) const;
};

struct DecoderLayerParams {
  LayerNorm norm_q1, norm_q2, norm_mem, norm_q3;
  MultiHeadAttention self_attn;
  MultiHeadAttention cross_attn;
  Linear ffn1, ffn2;
  MultiHeadAttention ggit_attn;  // single head
};

template <typename T>
struct BasicLayerPrediction {
  BasicTensor<T> class_logits;  // [N, K+1]
  BasicTensor<T> mask_logits;   // [N, H*W]
};
using LayerPrediction = BasicLayerPrediction<float>;

/// Materialised per-query output.
struct InstancePrediction {
  std::vector<double> class_dist;  // K+1 probabilities
  std::vector<float> mask_logits;  // H*W
  std::vector<float> mask_embedding;
  std::size_t height = 0, width = 0;

  std::vector<float> mask_probabilities() const;
};

std::vector<InstancePrediction> materialize(const LayerPrediction& pred, const Tensor& embeddings,
                                            std::size_t height, std::size_t width);

struct DecoderOutput {
  std::vector<LayerPrediction> layers;  // one per decoder layer
  Tensor final_embeddings;              // mask embeddings of the last layer
  PixelFeatures pixels;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(ParamStore& store, const std::string& name, const DecoderConfig& config,
          const std::array<std::size_t, kStages>& level_channels, std::size_t mask_height, std::size_t mask_width,
          std::size_t token_width, Initializer& init);

  PixelFeatures pixel_decode(const StagePyramid& pyramid) const;
  Tensor decoder_layer(std::size_t layer, const Tensor& queries, const PixelFeatures& pix,
                       const GGITokens& ggit) const;
  // Returns predictions and writes the mask embeddings [N, E] when requested.
  LayerPrediction predict(const Tensor& queries, const PixelFeatures& pix, Tensor* embeddings = nullptr) const;
  DecoderOutput forward(const StagePyramid& pyramid, const GGITokens& ggit) const;

  const DecoderConfig& config() const { return config_; }
  const Tensor& query_embeddings() const { return queries_; }
  const MsdaParams& msda_params() const { return msda_; }
  const DecoderLayerParams& layer(std::size_t l) const { return layers_[l]; }
  std::size_t mask_height() const { return mask_h_; }
  std::size_t mask_width() const { return mask_w_; }

 private:
  DecoderConfig config_;
  std::size_t mask_h_ = 0, mask_w_ = 0;
  std::array<Linear, kStages> input_proj_;
  MsdaParams msda_;
  Linear mask_proj_;
  Tensor queries_;
  std::vector<DecoderLayerParams> layers_;
  LayerNorm head_norm_;
  Linear class_head_;
  Linear mask_mlp1_, mask_mlp2_, mask_mlp3_;
};

}  // namespace winbev
