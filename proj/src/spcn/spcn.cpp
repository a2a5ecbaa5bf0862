// SPDX-License-Identifier: Apache-2.0
#include "winbev/spcn/spcn.hpp"

#include <memory>

#include "winbev/errors.hpp"
#include "winbev/numerics/ops.hpp"
#include "winbev/spcn/attention.hpp"

namespace winbev {

namespace {

void require_rank3(const Tensor& t, const char* what) {
  if (t.rank() != 3) throw DimensionError(std::string(what) + " expects [H, W, C], got " + shape_str(t.shape()));
}

}  // namespace

WindowSet partition(const Tensor& feature, std::size_t m) {
  require_rank3(feature, "partition");
  const std::size_t h = feature.dim(0), w = feature.dim(1), c = feature.dim(2);
  if (m == 0 || h % m != 0 || w % m != 0) {
    throw PartitionError("cannot partition H=" + std::to_string(h) + ", W=" + std::to_string(w) +
                         " into windows of M=" + std::to_string(m));
  }
  const std::size_t wy = h / m, wx = w / m;
  auto index = std::make_shared<std::vector<std::int64_t>>(h * w * c);
  std::size_t o = 0;
  for (std::size_t by = 0; by < wy; ++by)
    for (std::size_t bx = 0; bx < wx; ++bx)
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t s = 0; s < m; ++s)
          for (std::size_t k = 0; k < c; ++k)
            (*index)[o++] = static_cast<std::int64_t>(((by * m + r) * w + bx * m + s) * c + k);
  return {ops::gather(feature, std::move(index), {wy * wx, m * m, c}), h, w, m};
}

Tensor unpartition(const WindowSet& ws) {
  const std::size_t h = ws.height, w = ws.width, m = ws.size;
  const std::size_t c = ws.windows.dim(2);
  if (ws.windows.rank() != 3 || ws.windows.dim(0) != (h / m) * (w / m) || ws.windows.dim(1) != m * m) {
    throw DimensionError("window set " + shape_str(ws.windows.shape()) + " does not match its layout");
  }
  const std::size_t wx = w / m;
  auto index = std::make_shared<std::vector<std::int64_t>>(h * w * c);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t win = (y / m) * wx + x / m;
      const std::size_t tok = (y % m) * m + x % m;
      for (std::size_t k = 0; k < c; ++k)
        (*index)[(y * w + x) * c + k] = static_cast<std::int64_t>((win * m * m + tok) * c + k);
    }
  return ops::gather(ws.windows, std::move(index), {h, w, c});
}

Tensor merge_neighbourhoods(const Tensor& feature) {
  require_rank3(feature, "patch merge");
  const std::size_t h = feature.dim(0), w = feature.dim(1), c = feature.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("patch merge needs even extents, got " + std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  const std::size_t dy[4] = {0, 1, 0, 1};
  const std::size_t dx[4] = {0, 0, 1, 1};
  auto index = std::make_shared<std::vector<std::int64_t>>(h * w * c);
  std::size_t o = 0;
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (int q = 0; q < 4; ++q)
        for (std::size_t k = 0; k < c; ++k)
          (*index)[o++] = static_cast<std::int64_t>(((2 * y + dy[q]) * w + 2 * x + dx[q]) * c + k);
  return ops::gather(feature, std::move(index), {oh, ow, 4 * c});
}

SwbBlock::SwbBlock(ParamStore& store, const std::string& name, std::size_t channels, std::size_t heads_,
                   std::size_t ffn_ratio, bool normalize_, Initializer& init)
    : norm1(store, name + ".norm1", channels),
      qkv(store, name + ".qkv", channels, 3 * channels, init),
      proj(store, name + ".proj", channels, channels, init),
      norm2(store, name + ".norm2", channels),
      ffn1(store, name + ".ffn1", channels, ffn_ratio * channels, init),
      ffn2(store, name + ".ffn2", ffn_ratio * channels, channels, init),
      heads(heads_),
      normalize(normalize_) {
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("channels " + std::to_string(channels) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
}

Tensor swb_forward(const Tensor& windows, const SwbBlock& block, OpCounter* counter) {
  if (windows.rank() != 3) throw DimensionError("SWB expects [K, T, C], got " + shape_str(windows.shape()));
  const std::size_t c = windows.dim(2);
  if (block.heads == 0 || c % block.heads != 0) {
    throw ConfigError("channels " + std::to_string(c) + " not divisible by " + std::to_string(block.heads) +
                      " heads");
  }
  const std::size_t dh = c / block.heads;
  auto qkv = block.qkv(block.norm1(windows));
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < block.heads; ++h) {
    auto q = ops::slice_last(qkv, h * dh, dh);
    auto k = ops::slice_last(qkv, c + h * dh, dh);
    auto v = ops::slice_last(qkv, 2 * c + h * dh, dh);
    heads.push_back(linear_attention(q, k, v, block.normalize, counter));
  }
  auto x = ops::add(windows, block.proj(heads.size() == 1 ? heads[0] : ops::concat_last(heads)));
  auto ffn = block.ffn2(ops::relu(block.ffn1(block.norm2(x))));
  return ops::add(x, ffn);
}

GgitInjection::GgitInjection(ParamStore& store, const std::string& name, std::size_t channels,
                             std::size_t token_width, Initializer& init)
    : query(store, name + ".query", channels, channels, init),
      key(store, name + ".key", token_width, channels, init),
      value(store, name + ".value", token_width, channels, init),
      proj(store, name + ".proj", channels, channels, init) {}

Tensor ggit_inject(const Tensor& windows, const GGITokens& ggit, const GgitInjection& params) {
  if (windows.rank() != 3) throw DimensionError("GGIT injection expects [K, T, C], got " + shape_str(windows.shape()));
  const std::size_t k = windows.dim(0), t = windows.dim(1), c = windows.dim(2);
  const std::size_t n_tok = ggit.tokens.dim(0);
  auto q = params.query(ops::reshape(windows, {1, k * t, c}));
  auto keys = ops::reshape(params.key(ggit.tokens), {1, n_tok, c});
  auto values = ops::reshape(params.value(ggit.tokens), {1, n_tok, c});
  auto attended = ops::reshape(softmax_attention(q, keys, values), {k, t, c});
  return ops::add(windows, params.proj(attended));
}

PatchMerge::PatchMerge(ParamStore& store, const std::string& name, std::size_t channels, Initializer& init)
    : reduction(store, name + ".reduction", 4 * channels, 2 * channels, init, false) {}

Tensor PatchMerge::operator()(const Tensor& feature) const { return reduction(merge_neighbourhoods(feature)); }

void validate_spcn(std::size_t height, std::size_t width, const SpcnConfig& config) {
  if (config.channels == 0 || config.heads == 0 || config.channels % config.heads != 0) {
    throw ConfigError("SPCN channels " + std::to_string(config.channels) + " must be a positive multiple of heads " +
                      std::to_string(config.heads));
  }
  std::size_t h = height, w = width, m = config.window;
  for (std::size_t l = 1; l <= kStages; ++l) {
    const std::string where = "SPCN stage " + std::to_string(l) + ": ";
    if (m == 0) throw ConfigError(where + "window size halved to zero (M1=" + std::to_string(config.window) + ")");
    if (h % m != 0 || w % m != 0) {
      throw ConfigError(where + std::to_string(h) + "x" + std::to_string(w) + " map is not divisible by window " +
                        std::to_string(m));
    }
    if (h % 2 != 0 || w % 2 != 0) {
      throw ConfigError(where + std::to_string(h) + "x" + std::to_string(w) + " map cannot be merged (odd extent)");
    }
    if (l < kStages && m % 2 != 0) {
      throw ConfigError(where + "window " + std::to_string(m) + " cannot be halved for the next stage");
    }
    h /= 2;
    w /= 2;
    m /= 2;
  }
}

Spcn::Spcn(ParamStore& store, const std::string& name, const SpcnConfig& config, std::size_t token_width,
           Initializer& init)
    : config_(config) {
  std::size_t c = config.channels;
  for (std::size_t l = 0; l < kStages; ++l) {
    const std::string base = name + ".stage" + std::to_string(l + 1);
    auto& st = stages_[l];
    for (std::size_t b = 0; b < config.depths[l]; ++b) {
      st.blocks.emplace_back(store, base + ".block" + std::to_string(b + 1), c, config.heads, config.ffn_ratio,
                             config.normalize, init);
    }
    st.inject = GgitInjection(store, base + ".ggit", c, token_width, init);
    st.merge = PatchMerge(store, base + ".merge", c, init);
    c *= 2;
  }
}

StagePyramid Spcn::forward(const Tensor& bev, const GGITokens& ggit, OpCounter* counter) const {
  require_rank3(bev, "SPCN");
  if (bev.dim(2) != config_.channels) {
    throw DimensionError("SPCN expects " + std::to_string(config_.channels) + " channels, got " +
                         std::to_string(bev.dim(2)));
  }
  validate_spcn(bev.dim(0), bev.dim(1), config_);
  StagePyramid out;
  Tensor x = bev;
  std::size_t m = config_.window;
  for (std::size_t l = 0; l < kStages; ++l) {
    const auto& st = stages_[l];
    auto ws = partition(x, m);
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
      ws.windows = swb_forward(ws.windows, st.blocks[b], counter);
      if (b == 0) ws.windows = ggit_inject(ws.windows, ggit, st.inject);
    }
    if (st.blocks.empty()) ws.windows = ggit_inject(ws.windows, ggit, st.inject);
    x = st.merge(unpartition(ws));
    out.levels[l] = x;
    m /= 2;
  }
  return out;
}

}  // namespace winbev
