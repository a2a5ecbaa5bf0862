// SPDX-License-Identifier: Apache-2.0
#include "winbev/decoder/decoder.hpp"

#include <cmath>
#include <memory>
#include <numbers>

#include "winbev/errors.hpp"
#include "winbev/numerics/ops.hpp"
#include "winbev/spcn/attention.hpp"

namespace winbev {

Tensor positional_encoding(std::size_t rows, std::size_t cols, std::size_t channels) {
  std::vector<float> out(rows * cols * channels, 0.0f);
  const std::size_t groups = channels / 4;
  for (std::size_t i = 0; i < rows; ++i) {
    const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(rows);
    for (std::size_t j = 0; j < cols; ++j) {
      const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(cols);
      float* p = out.data() + (i * cols + j) * channels;
      for (std::size_t f = 0; f < groups; ++f) {
        const double w = static_cast<double>(f + 1) * std::numbers::pi;
        p[4 * f + 0] = static_cast<float>(std::sin(w * y));
        p[4 * f + 1] = static_cast<float>(std::cos(w * y));
        p[4 * f + 2] = static_cast<float>(std::sin(w * x));
        p[4 * f + 3] = static_cast<float>(std::cos(w * x));
      }
    }
  }
  return Tensor::constant({rows, cols, channels}, std::move(out));
}

std::vector<double> cell_reference_points(std::size_t rows, std::size_t cols) {
  std::vector<double> ref;
  ref.reserve(rows * cols * 2);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      ref.push_back((static_cast<double>(j) + 0.5) / static_cast<double>(cols));
      ref.push_back((static_cast<double>(i) + 0.5) / static_cast<double>(rows));
    }
  }
  return ref;
}

MsdaParams::MsdaParams(ParamStore& store, const std::string& name, std::size_t dim, std::size_t heads_,
                       std::size_t levels_, std::size_t points_, Initializer& init)
    : offsets(store, name + ".offsets", dim, heads_ * levels_ * points_ * 2, init),
      attention(store, name + ".attention", dim, heads_ * levels_ * points_, init),
      value(store, name + ".value", dim, dim, init),
      output(store, name + ".output", dim, dim, init),
      heads(heads_),
      levels(levels_),
      points(points_) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("MSDA width " + std::to_string(dim) + " not divisible by " + std::to_string(heads) + " heads");
  }
  // Offsets start as a fan of head directions, attention starts uniform.
  fill(offsets.weight, 0.0f);
  fill(attention.weight, 0.0f);
  std::vector<float> bias(heads * levels * points * 2);
  for (std::size_t m = 0; m < heads; ++m) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(heads);
    for (std::size_t l = 0; l < levels; ++l) {
      for (std::size_t p = 0; p < points; ++p) {
        const std::size_t at = ((m * levels + l) * points + p) * 2;
        bias[at] = static_cast<float>(std::cos(theta) * static_cast<double>(p + 1) * 0.5);
        bias[at + 1] = static_cast<float>(std::sin(theta) * static_cast<double>(p + 1) * 0.5);
      }
    }
  }
  assign(offsets.bias, bias);
}

Tensor msda(const Tensor& queries, std::span<const double> ref_xy, const std::vector<Tensor>& levels,
            const MsdaParams& params) {
  if (queries.rank() != 2) throw DimensionError("MSDA queries must be [Nq, d], got " + shape_str(queries.shape()));
  if (levels.size() != params.levels) {
    throw DimensionError("MSDA configured for " + std::to_string(params.levels) + " levels, got " +
                         std::to_string(levels.size()));
  }
  const std::size_t nq = queries.dim(0);
  const std::size_t lp = params.levels * params.points;
  auto offsets = ops::reshape(params.offsets(queries), {nq, params.heads, params.levels, params.points, 2});
  auto weights = ops::softmax_last(ops::reshape(params.attention(queries), {nq, params.heads, lp}));
  std::vector<Tensor> values;
  values.reserve(levels.size());
  for (const auto& lv : levels) values.push_back(params.value(lv));
  return params.output(ops::deformable_sample(values, ref_xy, offsets, weights, params.heads));
}

std::vector<float> InstancePrediction::mask_probabilities() const {
  std::vector<float> p(mask_logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<float>(1.0 / (1.0 + std::exp(-mask_logits[i])));
  return p;
}

std::vector<InstancePrediction> materialize(const LayerPrediction& pred, const Tensor& embeddings,
                                            std::size_t height, std::size_t width) {
  const std::size_t n = pred.class_logits.dim(0);
  const std::size_t k1 = pred.class_logits.dim(1);
  const std::size_t hw = pred.mask_logits.dim(1);
  if (hw != height * width) throw DimensionError("mask logits do not match the raster");
  const auto probs = ops::softmax_last(pred.class_logits.detach());
  const auto pv = probs.values();
  const auto mv = pred.mask_logits.values();
  std::vector<InstancePrediction> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& o = out[i];
    o.class_dist.assign(pv.begin() + static_cast<std::ptrdiff_t>(i * k1),
                        pv.begin() + static_cast<std::ptrdiff_t>((i + 1) * k1));
    o.mask_logits.assign(mv.begin() + static_cast<std::ptrdiff_t>(i * hw),
                         mv.begin() + static_cast<std::ptrdiff_t>((i + 1) * hw));
    if (embeddings.defined()) {
      const std::size_t e = embeddings.dim(1);
      const auto ev = embeddings.values();
      o.mask_embedding.assign(ev.begin() + static_cast<std::ptrdiff_t>(i * e),
                              ev.begin() + static_cast<std::ptrdiff_t>((i + 1) * e));
    }
    o.height = height;
    o.width = width;
  }
  return out;
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name, std::size_t dim,
                                       std::size_t kv_dim, std::size_t heads_, Initializer& init)
    : query(store, name + ".query", dim, dim, init),
      key(store, name + ".key", kv_dim, dim, init),
      value(store, name + ".value", kv_dim, dim, init),
      output(store, name + ".output", dim, dim, init),
      heads(heads_) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention width " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
}

Tensor MultiHeadAttention::operator()(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in) const {
  auto q = query(q_in);
  auto k = key(k_in);
  auto v = value(v_in);
  const std::size_t d = q.dim(1);
  const std::size_t dh = d / heads;
  if (heads == 1) return output(softmax_attention(q, k, v));
  std::vector<Tensor> parts;
  for (std::size_t h = 0; h < heads; ++h) {
    parts.push_back(softmax_attention(ops::slice_last(q, h * dh, dh), ops::slice_last(k, h * dh, dh),
                                      ops::slice_last(v, h * dh, dh)));
  }
  return output(ops::concat_last(parts));
}

namespace {

// Stacks [n_i, d] blocks into one [sum n_i, d] tensor.
Tensor stack_rows(const std::vector<Tensor>& blocks, std::size_t d) {
  std::vector<Tensor> flat;
  std::size_t rows = 0;
  for (const auto& b : blocks) {
    flat.push_back(ops::reshape(b, {b.numel()}));
    rows += b.numel() / d;
  }
  return ops::reshape(ops::concat_last(flat), {rows, d});
}

Tensor take_rows(const Tensor& t, std::size_t start, std::size_t count, Shape shape) {
  const std::size_t d = t.dim(1);
  std::vector<std::int64_t> index(count * d);
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = static_cast<std::int64_t>(start * d + i);
  return ops::gather(t, std::move(index), std::move(shape));
}

}  // namespace

Decoder::Decoder(ParamStore& store, const std::string& name, const DecoderConfig& config,
                 const std::array<std::size_t, kStages>& level_channels, std::size_t mask_height,
                 std::size_t mask_width, std::size_t token_width, Initializer& init)
    : config_(config), mask_h_(mask_height), mask_w_(mask_width) {
  if (config.queries == 0 || config.layers == 0) throw ConfigError("decoder needs at least one query and layer");
  const std::size_t d = config.dim;
  for (std::size_t l = 0; l < kStages; ++l) {
    input_proj_[l] = Linear(store, name + ".input_proj" + std::to_string(l + 1), level_channels[l], d, init);
  }
  msda_ = MsdaParams(store, name + ".msda", d, config.heads, kStages, config.points, init);
  mask_proj_ = Linear(store, name + ".mask_proj", d, config.mask_dim, init);
  queries_ = store.add(name + ".queries", Tensor::parameter({config.queries, d}, init.normal(config.queries * d, 1.0f)));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string base = name + ".layer" + std::to_string(l + 1);
    DecoderLayerParams p;
    p.norm_q1 = LayerNorm(store, base + ".norm_self", d);
    p.norm_q2 = LayerNorm(store, base + ".norm_cross", d);
    p.norm_mem = LayerNorm(store, base + ".norm_memory", d);
    p.norm_q3 = LayerNorm(store, base + ".norm_ffn", d);
    p.self_attn = MultiHeadAttention(store, base + ".self_attn", d, d, config.heads, init);
    p.cross_attn = MultiHeadAttention(store, base + ".cross_attn", d, d, config.heads, init);
    p.ffn1 = Linear(store, base + ".ffn1", d, config.ffn_ratio * d, init);
    p.ffn2 = Linear(store, base + ".ffn2", config.ffn_ratio * d, d, init);
    p.ggit_attn = MultiHeadAttention(store, base + ".ggit_attn", d, token_width, 1, init);
    layers_.push_back(std::move(p));
  }
  head_norm_ = LayerNorm(store, name + ".head_norm", d);
  class_head_ = Linear(store, name + ".class_head", d, config.classes + 1, init);
  mask_mlp1_ = Linear(store, name + ".mask_mlp1", d, d, init);
  mask_mlp2_ = Linear(store, name + ".mask_mlp2", d, d, init);
  mask_mlp3_ = Linear(store, name + ".mask_mlp3", d, config.mask_dim, init);
}

PixelFeatures Decoder::pixel_decode(const StagePyramid& pyramid) const {
  const std::size_t d = config_.dim;
  std::vector<Tensor> tokens, queries, pos;
  std::vector<double> ref;
  std::vector<std::size_t> sizes;
  for (std::size_t l = 0; l < kStages; ++l) {
    const auto& f = pyramid.levels[l];
    const std::size_t h = f.dim(0), w = f.dim(1);
    auto t = input_proj_[l](f);
    auto pe = positional_encoding(h, w, d);
    tokens.push_back(t);
    queries.push_back(ops::add(t, pe));
    pos.push_back(pe);
    const auto r = cell_reference_points(h, w);
    ref.insert(ref.end(), r.begin(), r.end());
    sizes.push_back(h * w);
  }
  PixelFeatures pix;
  pix.memory = msda(stack_rows(queries, d), ref, tokens, msda_);
  pix.memory_pos = stack_rows(pos, d);
  std::size_t start = 0;
  for (std::size_t l = 0; l < kStages; ++l) {
    const auto& f = pyramid.levels[l];
    pix.levels.push_back(take_rows(pix.memory, start, sizes[l], {f.dim(0), f.dim(1), d}));
    start += sizes[l];
  }
  const std::size_t h1 = pix.levels[0].dim(0), w1 = pix.levels[0].dim(1);
  Tensor sum = pix.levels[0];
  for (std::size_t l = 1; l < kStages; ++l) sum = ops::add(sum, ops::resize_bilinear(pix.levels[l], h1, w1));
  auto mask = ops::resize_bilinear(mask_proj_(sum), mask_h_, mask_w_);
  pix.mask_features = ops::add(mask, positional_encoding(mask_h_, mask_w_, config_.mask_dim));
  return pix;
}

Tensor Decoder::decoder_layer(std::size_t layer, const Tensor& queries, const PixelFeatures& pix,
                              const GGITokens& ggit) const {
  const auto& p = layers_.at(layer);
  auto n1 = p.norm_q1(queries);
  auto q1 = ops::add(queries, p.self_attn(n1, n1, n1));
  auto mem = ops::add(p.norm_mem(pix.memory), pix.memory_pos);
  auto q2 = ops::add(q1, p.cross_attn(p.norm_q2(q1), mem, mem));
  auto q3 = ops::add(q2, p.ffn2(ops::relu(p.ffn1(p.norm_q3(q2)))));
  return ops::add(q3, p.ggit_attn(q3, ggit.tokens, ggit.tokens));
}

LayerPrediction Decoder::predict(const Tensor& queries, const PixelFeatures& pix, Tensor* embeddings) const {
  const std::size_t n = queries.dim(0);
  const auto& mf = pix.mask_features;
  if (mf.dim(2) != config_.mask_dim) {
    throw DimensionError("mask features have " + std::to_string(mf.dim(2)) + " channels, expected " +
                         std::to_string(config_.mask_dim));
  }
  auto hq = head_norm_(queries);
  LayerPrediction out;
  out.class_logits = class_head_(hq);
  auto m = mask_mlp3_(ops::relu(mask_mlp2_(ops::relu(mask_mlp1_(hq)))));
  if (embeddings) *embeddings = m;
  const std::size_t hw = mf.dim(0) * mf.dim(1);
  auto logits = ops::bmm(ops::reshape(m, {1, n, config_.mask_dim}), ops::reshape(mf, {1, hw, config_.mask_dim}),
                         false, true);
  out.mask_logits = ops::reshape(logits, {n, hw});
  return out;
}

DecoderOutput Decoder::forward(const StagePyramid& pyramid, const GGITokens& ggit) const {
  DecoderOutput out;
  out.pixels = pixel_decode(pyramid);
  Tensor q = queries_;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    q = decoder_layer(l, q, out.pixels, ggit);
    out.layers.push_back(predict(q, out.pixels, l + 1 == config_.layers ? &out.final_embeddings : nullptr));
  }
  return out;
}

}  // namespace winbev
