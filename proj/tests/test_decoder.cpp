// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "winbev/decoder/decoder.hpp"
#include "winbev/errors.hpp"
#include "winbev/numerics/ops.hpp"

using namespace winbev;

namespace {

std::vector<float> randf(std::mt19937_64& rng, std::size_t n, float sd = 1.0f) {
  std::normal_distribution<float> d(0.0f, sd);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<float> eye(std::size_t d) {
  std::vector<float> v(d * d, 0.0f);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0f;
  return v;
}

// Bilinear read of channel c at pixel coordinates (px, py), zero outside.
double bilinear(const Tensor& map, double px, double py, std::size_t c) {
  const std::size_t h = map.dim(0), w = map.dim(1), ch = map.dim(2);
  const auto v = map.values();
  const double x0 = std::floor(px), y0 = std::floor(py);
  double out = 0.0;
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      const double xi = x0 + dx, yi = y0 + dy;
      if (xi < 0 || yi < 0 || xi >= static_cast<double>(w) || yi >= static_cast<double>(h)) continue;
      const double wt = (dx ? px - x0 : 1.0 - (px - x0)) * (dy ? py - y0 : 1.0 - (py - y0));
      out += wt * v[(static_cast<std::size_t>(yi) * w + static_cast<std::size_t>(xi)) * ch + c];
    }
  }
  return out;
}

MsdaParams identity_msda(ParamStore& store, std::size_t d, std::size_t heads, std::size_t levels,
                         std::size_t points, bool zero_offsets) {
  Initializer init(7);
  MsdaParams p(store, "msda", d, heads, levels, points, init);
  fill(p.attention.bias, 0.0f);
  assign(p.value.weight, eye(d));
  fill(p.value.bias, 0.0f);
  assign(p.output.weight, eye(d));
  fill(p.output.bias, 0.0f);
  if (zero_offsets) fill(p.offsets.bias, 0.0f);
  return p;
}

struct Fixture {
  ParamStore store;
  DecoderConfig cfg;
  Decoder dec;
  StagePyramid pyr;
  GGITokens ggit;

  explicit Fixture(std::uint64_t seed) {
    cfg.dim = 16;
    cfg.queries = 5;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.points = 2;
    cfg.mask_dim = 8;
    Initializer init(seed);
    dec = Decoder(store, "dec", cfg, {4, 8, 16, 32}, 8, 8, 6, init);
    std::mt19937_64 rng(seed + 100);
    for (std::size_t l = 0; l < kStages; ++l) {
      const std::size_t s = 8 >> l, c = 4u << l;
      pyr.levels[l] = Tensor::constant({s, s, c}, randf(rng, s * s * c));
    }
    ggit.tokens = Tensor::constant({3, 6}, randf(rng, 18));
    ggit.provenance = std::vector<TokenGroup>(3, TokenGroup::Global);
  }
};

}  // namespace

TEST(PositionalEncoding, ValuesFollowTheCellCentre) {
  const auto pe = positional_encoding(4, 5, 10);
  ASSERT_EQ(pe.shape(), (Shape{4, 5, 10}));
  const auto v = pe.values();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const float* p = v.data() + (i * 5 + j) * 10;
      const double y = (i + 0.5) / 4.0, x = (j + 0.5) / 5.0;
      for (std::size_t f = 0; f < 2; ++f) {
        const double w = (f + 1) * std::numbers::pi;
        EXPECT_NEAR(p[4 * f + 0], std::sin(w * y), 1e-6);
        EXPECT_NEAR(p[4 * f + 1], std::cos(w * y), 1e-6);
        EXPECT_NEAR(p[4 * f + 2], std::sin(w * x), 1e-6);
        EXPECT_NEAR(p[4 * f + 3], std::cos(w * x), 1e-6);
      }
      EXPECT_EQ(p[8], 0.0f);
      EXPECT_EQ(p[9], 0.0f);
    }
  }
  const auto ref = cell_reference_points(2, 4);
  ASSERT_EQ(ref.size(), 16u);
  EXPECT_DOUBLE_EQ(ref[0], 0.125);
  EXPECT_DOUBLE_EQ(ref[1], 0.25);
  EXPECT_DOUBLE_EQ(ref[14], 0.875);
  EXPECT_DOUBLE_EQ(ref[15], 0.75);
}

TEST(Msda, ZeroOffsetsOnConstantMapsReturnTheConstant) {
  ParamStore store;
  const std::size_t d = 8;
  auto p = identity_msda(store, d, 2, 2, 3, true);
  std::vector<Tensor> levels{Tensor::full({6, 6, d}, 2.5f), Tensor::full({3, 3, d}, 2.5f)};
  std::mt19937_64 rng(1);
  auto q = Tensor::constant({4, d}, randf(rng, 4 * d));
  const std::vector<double> ref{0.5, 0.5, 0.3, 0.6, 0.45, 0.55, 0.6, 0.4};
  const auto out = msda(q, ref, levels, p);
  ASSERT_EQ(out.shape(), (Shape{4, d}));
  for (float x : out.values()) EXPECT_NEAR(x, 2.5f, 1e-5);
}

TEST(Msda, HandEvaluatedTwoLevelPyramid) {
  ParamStore store;
  const std::size_t d = 4, heads = 2, levels_n = 2, points = 2;
  auto p = identity_msda(store, d, heads, levels_n, points, false);
  std::mt19937_64 rng(2);
  std::vector<Tensor> levels{Tensor::constant({4, 4, d}, randf(rng, 64)),
                             Tensor::constant({2, 2, d}, randf(rng, 16))};
  auto q = Tensor::constant({3, d}, randf(rng, 3 * d));
  const std::vector<double> ref{0.375, 0.625, 0.1, 0.9, 0.5, 0.5};
  const auto out = msda(q, ref, levels, p);
  const auto off = p.offsets.bias.values();
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t c = 0; c < d; ++c) {
      const std::size_t m = c / (d / heads);
      double expected = 0.0;
      for (std::size_t l = 0; l < levels_n; ++l) {
        const double wl = static_cast<double>(levels[l].dim(1)), hl = static_cast<double>(levels[l].dim(0));
        for (std::size_t k = 0; k < points; ++k) {
          const std::size_t at = ((m * levels_n + l) * points + k) * 2;
          const double px = ref[2 * n] * wl - 0.5 + off[at];
          const double py = ref[2 * n + 1] * hl - 0.5 + off[at + 1];
          expected += bilinear(levels[l], px, py, c) / static_cast<double>(levels_n * points);
        }
      }
      EXPECT_NEAR(out.values()[n * d + c], expected, 1e-5) << "query " << n << " channel " << c;
    }
  }
}

TEST(Msda, SamplingStageStaysInHullOfSamples) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  const std::size_t nq = 4, heads = 2, levels_n = 2, points = 3, d = 4;
  for (int t = 0; t < 100; ++t) {
    std::vector<Tensor> levels{Tensor::constant({5, 5, d}, randf(rng, 100)), Tensor::constant({3, 3, d}, randf(rng, 36))};
    std::vector<double> ref(nq * 2);
    for (auto& r : ref) r = pos(rng);
    auto offsets = Tensor::constant({nq, heads, levels_n, points, 2}, randf(rng, nq * heads * levels_n * points * 2));
    auto weights = ops::softmax_last(Tensor::constant({nq, heads, levels_n * points}, randf(rng, nq * heads * levels_n * points, 2.0f)));
    const auto out = ops::deformable_sample(levels, ref, offsets, weights, heads);
    const auto ov = offsets.values();
    for (std::size_t n = 0; n < nq; ++n) {
      for (std::size_t c = 0; c < d; ++c) {
        const std::size_t m = c / (d / heads);
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t l = 0; l < levels_n; ++l) {
          for (std::size_t k = 0; k < points; ++k) {
            const std::size_t at = (((n * heads + m) * levels_n + l) * points + k) * 2;
            const double px = ref[2 * n] * levels[l].dim(1) - 0.5 + ov[at];
            const double py = ref[2 * n + 1] * levels[l].dim(0) - 0.5 + ov[at + 1];
            const double s = bilinear(levels[l], px, py, c);
            lo = std::min(lo, s);
            hi = std::max(hi, s);
          }
        }
        const double o = out.values()[n * d + c];
        ASSERT_GE(o, lo - 1e-5);
        ASSERT_LE(o, hi + 1e-5);
      }
    }
  }
}

TEST(Msda, RejectsBadInputs) {
  ParamStore store;
  Initializer init(3);
  EXPECT_THROW(MsdaParams(store, "bad", 6, 4, 1, 1, init), ConfigError);
  auto p = identity_msda(store, 4, 1, 2, 1, true);
  std::vector<Tensor> one{Tensor::zeros({2, 2, 4})};
  const std::vector<double> ref{0.5, 0.5};
  EXPECT_THROW(msda(Tensor::zeros({1, 4}), ref, one, p), DimensionError);
}

TEST(MultiHeadAttention, SingleKeyReturnsProjectedValue) {
  ParamStore store;
  Initializer init(4);
  MultiHeadAttention mha(store, "mha", 8, 6, 2, init);
  std::mt19937_64 rng(5);
  auto q = Tensor::constant({3, 8}, randf(rng, 24));
  auto kv = Tensor::constant({1, 6}, randf(rng, 6));
  const auto out = mha(q, kv, kv);
  const auto expected = mha.output(mha.value(kv));
  ASSERT_EQ(out.shape(), (Shape{3, 8}));
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out.values()[n * 8 + c], expected.values()[c], 1e-5);
  }
  EXPECT_THROW(MultiHeadAttention(store, "bad", 6, 6, 4, init), ConfigError);
}

TEST(Decoder, ForwardShapesAndDeepSupervision) {
  Fixture f(11);
  const auto out = f.dec.forward(f.pyr, f.ggit);
  ASSERT_EQ(out.layers.size(), f.cfg.layers);
  for (const auto& lp : out.layers) {
    EXPECT_EQ(lp.class_logits.shape(), (Shape{5, 2}));
    EXPECT_EQ(lp.mask_logits.shape(), (Shape{5, 64}));
    for (float x : lp.mask_logits.values()) ASSERT_TRUE(std::isfinite(x));
    for (float x : lp.class_logits.values()) ASSERT_TRUE(std::isfinite(x));
  }
  EXPECT_EQ(out.final_embeddings.shape(), (Shape{5, 8}));
  EXPECT_EQ(out.pixels.mask_features.shape(), (Shape{8, 8, 8}));
  EXPECT_EQ(out.pixels.memory.shape(), (Shape{64 + 16 + 4 + 1, 16}));
  ASSERT_EQ(out.pixels.levels.size(), kStages);
  EXPECT_EQ(out.pixels.levels[2].shape(), (Shape{2, 2, 16}));
}

TEST(Decoder, MaterializedDistributionsSumToOne) {
  Fixture f(12);
  const auto out = f.dec.forward(f.pyr, f.ggit);
  const auto inst = materialize(out.layers.back(), out.final_embeddings, 8, 8);
  ASSERT_EQ(inst.size(), 5u);
  for (const auto& p : inst) {
    EXPECT_NEAR(std::accumulate(p.class_dist.begin(), p.class_dist.end(), 0.0), 1.0, 1e-6);
    EXPECT_EQ(p.mask_logits.size(), 64u);
    EXPECT_EQ(p.mask_embedding.size(), 8u);
    for (float m : p.mask_probabilities()) {
      EXPECT_GE(m, 0.0f);
      EXPECT_LE(m, 1.0f);
    }
  }
  EXPECT_THROW(materialize(out.layers.back(), out.final_embeddings, 4, 8), DimensionError);
}

TEST(Decoder, ZeroClassHeadGivesZeroLogits) {
  Fixture f(13);
  fill(*f.store.find("dec.class_head.weight"), 0.0f);
  fill(*f.store.find("dec.class_head.bias"), 0.0f);
  const auto out = f.dec.forward(f.pyr, f.ggit);
  for (const auto& lp : out.layers) {
    for (float x : lp.class_logits.values()) EXPECT_EQ(x, 0.0f);
  }
  for (const auto& p : materialize(out.layers[0], Tensor(), 8, 8)) {
    for (double c : p.class_dist) EXPECT_NEAR(c, 0.5, 1e-12);
  }
}

TEST(Decoder, ZeroMaskEmbeddingGivesHalfProbabilities) {
  Fixture f(17);
  fill(*f.store.find("dec.mask_mlp3.weight"), 0.0f);
  fill(*f.store.find("dec.mask_mlp3.bias"), 0.0f);
  const auto out = f.dec.forward(f.pyr, f.ggit);
  for (const auto& p : materialize(out.layers.back(), out.final_embeddings, 8, 8)) {
    for (float m : p.mask_logits) EXPECT_EQ(m, 0.0f);
    for (float m : p.mask_probabilities()) EXPECT_EQ(m, 0.5f);
  }
}

TEST(Decoder, LayerIsEquivariantToQueryPermutation) {
  Fixture f(14);
  const auto pix = f.dec.pixel_decode(f.pyr);
  std::mt19937_64 rng(15);
  for (int t = 0; t < 10; ++t) {
    auto q = Tensor::constant({5, 16}, randf(rng, 80));
    std::vector<std::size_t> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<float> pv(80);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t c = 0; c < 16; ++c) pv[i * 16 + c] = q.values()[perm[i] * 16 + c];
    }
    const auto a = f.dec.decoder_layer(0, q, pix, f.ggit);
    const auto b = f.dec.decoder_layer(0, Tensor::constant({5, 16}, pv), pix, f.ggit);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t c = 0; c < 16; ++c) {
        ASSERT_NEAR(b.values()[i * 16 + c], a.values()[perm[i] * 16 + c], 1e-4);
      }
    }
    const auto pa = f.dec.predict(a, pix);
    const auto pb = f.dec.predict(b, pix);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t c = 0; c < 64; ++c) {
        ASSERT_NEAR(pb.mask_logits.values()[i * 64 + c], pa.mask_logits.values()[perm[i] * 64 + c], 1e-3);
      }
    }
  }
}

TEST(Decoder, DeterministicAndDifferentiable) {
  Fixture a(16), b(16);
  const auto oa = a.dec.forward(a.pyr, a.ggit);
  const auto ob = b.dec.forward(b.pyr, b.ggit);
  for (std::size_t i = 0; i < oa.layers.back().mask_logits.numel(); ++i) {
    ASSERT_EQ(oa.layers.back().mask_logits.values()[i], ob.layers.back().mask_logits.values()[i]);
  }
  Tensor loss = ops::sum_all(oa.layers[0].class_logits);
  for (const auto& lp : oa.layers) loss = ops::add(loss, ops::mean_all(ops::square(lp.mask_logits)));
  loss.backward();
  for (const char* name : {"dec.queries", "dec.msda.offsets.weight", "dec.layer1.self_attn.query.weight",
                           "dec.layer2.ggit_attn.value.weight", "dec.mask_mlp3.weight", "dec.input_proj4.weight"}) {
    const auto* t = a.store.find(name);
    ASSERT_NE(t, nullptr) << name;
    ASSERT_TRUE(t->has_grad()) << name;
    double norm = 0.0;
    for (float g : t->grad()) norm += std::abs(g);
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST(Decoder, OnePredictionPerLayer) {
  for (std::size_t layers : {1u, 2u, 4u}) {
    ParamStore store;
    Initializer init(30);
    DecoderConfig cfg;
    cfg.dim = 8;
    cfg.queries = 3;
    cfg.layers = layers;
    cfg.heads = 2;
    cfg.points = 1;
    cfg.mask_dim = 4;
    Decoder dec(store, "d", cfg, {2, 4, 8, 16}, 8, 8, 3, init);
    std::mt19937_64 rng(31);
    StagePyramid pyr;
    for (std::size_t l = 0; l < kStages; ++l) {
      const std::size_t s = 8 >> l, c = 2u << l;
      pyr.levels[l] = Tensor::constant({s, s, c}, randf(rng, s * s * c));
    }
    GGITokens tok{Tensor::constant({2, 3}, randf(rng, 6)), std::vector<TokenGroup>(2, TokenGroup::Global)};
    EXPECT_EQ(dec.forward(pyr, tok).layers.size(), layers);
  }
}

TEST(Decoder, RejectsEmptyConfig) {
  ParamStore store;
  Initializer init(1);
  DecoderConfig cfg;
  cfg.queries = 0;
  EXPECT_THROW(Decoder(store, "d", cfg, {4, 8, 16, 32}, 8, 8, 6, init), ConfigError);
}
