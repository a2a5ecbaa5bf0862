// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "winbev/errors.hpp"
#include "winbev/harness/artifacts.hpp"
#include "winbev/harness/checkpoint.hpp"
#include "winbev/harness/config.hpp"
#include "winbev/harness/evaluate.hpp"
#include "winbev/harness/model.hpp"
#include "winbev/harness/train.hpp"

using namespace winbev;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "winbev_test_harness";
  fs::create_directories(dir);
  return dir / name;
}

Mask rect(std::size_t h, std::size_t w, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  Mask m(h, w);
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) m.set(r, c);
  }
  return m;
}

GroundTruthInstance gt(const Mask& m, int cls = 0) {
  GroundTruthInstance g;
  g.class_id = cls;
  g.footprint_mask = m;
  g.full_area = m.area();
  return g;
}

DetectedInstance det(const Mask& m, double score, std::size_t query, int cls = 0) {
  DetectedInstance d;
  d.class_id = cls;
  d.score = score;
  d.binary_mask = m;
  d.query = query;
  return d;
}

PipelineConfig small_config() {
  auto c = toy_config();
  c.scenes.count = 1;
  return c;
}

}  // namespace

TEST(Config, ParseOverridesAndFormatRoundTrip) {
  std::istringstream in("# comment\ndecoder.queries = 12\ntrain.optimizer = adam\nspcn.depths = 2,2,4,2\n"
                        "spcn.normalize = false\n\nrun.seed = 9  # trailing\n");
  const auto c = parse_config(in);
  EXPECT_EQ(c.decoder.queries, 12u);
  EXPECT_EQ(c.train.optimizer, "adam");
  EXPECT_EQ(c.spcn.depths[2], 4u);
  EXPECT_FALSE(c.spcn.normalize);
  EXPECT_EQ(c.seed, 9u);

  std::istringstream again(format_config(c));
  const auto back = parse_config(again, toy_config());
  EXPECT_EQ(format_config(back), format_config(c));
}

TEST(Config, RejectsBadInput) {
  std::istringstream unknown("decoder.colour = 3\n");
  EXPECT_THROW(parse_config(unknown), ConfigError);
  std::istringstream noeq("decoder.queries 3\n");
  EXPECT_THROW(parse_config(noeq), ConfigError);
  std::istringstream notnum("train.learning_rate = fast\n");
  EXPECT_THROW(parse_config(notnum), ConfigError);
  std::istringstream negative("decoder.queries = -2\n");
  EXPECT_THROW(parse_config(negative), ConfigError);

  auto c = toy_config();
  EXPECT_NO_THROW(c.validate());
  PipelineConfig d;
  EXPECT_NO_THROW(d.validate());
  c.raster_height = 31;
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_config();
  c.decoder.queries = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_config();
  c.train.optimizer = "rmsprop";
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_config();
  c.visibility_floor = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(load_config(scratch("no_such.cfg")), IoError);
}

TEST(Evaluate, PerfectAndEmptyDetections) {
  const auto a = rect(8, 8, 0, 3, 0, 3), b = rect(8, 8, 5, 8, 5, 8);
  const std::vector<std::vector<GroundTruthInstance>> gts{{gt(a), gt(b)}, {gt(a)}};
  const auto perfect = evaluate({{det(a, 0.9, 0), det(b, 0.8, 1)}, {det(a, 0.7, 0)}}, gts);
  ASSERT_TRUE(perfect.ap50 && perfect.ap70 && perfect.map && perfect.miou);
  EXPECT_DOUBLE_EQ(*perfect.ap50, 1.0);
  EXPECT_DOUBLE_EQ(*perfect.ap70, 1.0);
  EXPECT_DOUBLE_EQ(*perfect.map, 1.0);
  EXPECT_DOUBLE_EQ(*perfect.miou, 1.0);
  ASSERT_EQ(perfect.scenes.size(), 2u);
  EXPECT_EQ(perfect.scenes[0].ground_truths, 2u);

  const auto none = evaluate({{}, {}}, gts);
  EXPECT_DOUBLE_EQ(*none.ap50, 0.0);
  EXPECT_DOUBLE_EQ(*none.miou, 0.0);

  const auto na = evaluate({{det(a, 0.9, 0)}}, {{}});
  EXPECT_FALSE(na.ap50.has_value());
  EXPECT_FALSE(na.map.has_value());
  EXPECT_THROW(evaluate({{}}, gts), DimensionError);
}

TEST(Evaluate, HandComputedCurveWithDuplicate) {
  const auto a = rect(8, 8, 0, 3, 0, 3), b = rect(8, 8, 5, 8, 5, 8);
  const std::vector<std::vector<DetectedInstance>> dets{{det(a, 0.9, 0), det(a, 0.8, 1), det(b, 0.7, 2)}};
  const std::vector<std::vector<GroundTruthInstance>> gts{{gt(a), gt(b)}};
  const auto curve = pr_curve(dets, gts, 0, 0.5);
  ASSERT_EQ(curve.size(), 3u);
  EXPECT_DOUBLE_EQ(curve[0].precision, 1.0);
  EXPECT_DOUBLE_EQ(curve[0].recall, 0.5);
  EXPECT_DOUBLE_EQ(curve[1].precision, 0.5);
  EXPECT_DOUBLE_EQ(curve[1].recall, 0.5);
  EXPECT_DOUBLE_EQ(curve[2].precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(curve[2].recall, 1.0);
  // Recall 0..0.5 sees precision 1, recall 0.51..1 sees 2/3.
  EXPECT_NEAR(interpolated_ap(curve), (51.0 + 50.0 * 2.0 / 3.0) / 101.0, 1e-12);
  EXPECT_DOUBLE_EQ(interpolated_ap({}), 0.0);
}

TEST(Evaluate, ThresholdsAndMonotonicity) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> corner(0, 5);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::vector<DetectedInstance>> dets(2);
    std::vector<std::vector<GroundTruthInstance>> gts(2);
    for (std::size_t s = 0; s < 2; ++s) {
      for (std::size_t g = 0; g < 3; ++g) {
        const std::size_t r = corner(rng), c = corner(rng);
        gts[s].push_back(gt(rect(10, 10, r, r + 4, c, c + 4)));
      }
      for (std::size_t q = 0; q < 4; ++q) {
        const std::size_t r = corner(rng), c = corner(rng);
        dets[s].push_back(det(rect(10, 10, r, r + 4, c, c + 4), score(rng), q));
      }
    }
    const auto rep = evaluate(dets, gts);
    ASSERT_LE(*rep.ap70, *rep.ap50 + 1e-12);
    ASSERT_NEAR(*rep.map, 0.5 * (*rep.ap50 + *rep.ap70), 1e-12);
    const auto curve = pr_curve(dets, gts, 0, 0.5);
    for (std::size_t i = 1; i < curve.size(); ++i) ASSERT_GE(curve[i].recall, curve[i - 1].recall);
    ASSERT_GE(*rep.miou, 0.0);
    ASSERT_LE(*rep.miou, 1.0);
  }
}

TEST(Evaluate, BetterMasksNeverLowerAp) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> shift(1, 4);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::vector<DetectedInstance>> worse(2), better(2);
    std::vector<std::vector<GroundTruthInstance>> gts(2);
    for (std::size_t s = 0; s < 2; ++s) {
      for (std::size_t g = 0; g < 3; ++g) {
        // 6x6 objects in separate 12-cell bands; detections slide along the band
        const std::size_t r0 = 12 * g + 3;
        gts[s].push_back(gt(rect(36, 20, r0, r0 + 6, 2, 8)));
        const std::size_t k = shift(rng);
        const double sc = score(rng);
        worse[s].push_back(det(rect(36, 20, r0, r0 + 6, 2 + k, 8 + k), sc, g));
        better[s].push_back(det(rect(36, 20, r0, r0 + 6, 1 + k, 7 + k), sc, g));
      }
    }
    const auto a = evaluate(worse, gts), b = evaluate(better, gts);
    ASSERT_GE(*b.ap50, *a.ap50);
    ASSERT_GE(*b.ap70, *a.ap70);
    ASSERT_GE(*b.map, *a.map);
    ASSERT_GT(*b.miou, *a.miou);
  }
}

TEST(Boundary, RatiosFloorAndEmptyMasks) {
  const auto full = rect(4, 4, 0, 4, 0, 2);
  const auto half = rect(4, 4, 0, 2, 0, 2);
  const auto tiny = rect(4, 4, 0, 1, 0, 1);
  std::vector<VisibilityObservation> obs{
      {0, full, full}, {1, half, full}, {1, tiny, full}, {2, Mask(4, 4), full}, {3, tiny, Mask(4, 4)}};
  const auto rep = boundary_completion(obs, 0.1);
  ASSERT_EQ(rep.best_ratio.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.best_ratio.at(0), 1.0);
  EXPECT_DOUBLE_EQ(rep.best_ratio.at(1), 0.5);
  EXPECT_EQ(rep.below_floor, 1u);
  EXPECT_EQ(rep.empty_full, 1u);
  EXPECT_EQ(rep.histogram[9], 1u);
  EXPECT_EQ(rep.histogram[5], 1u);
  EXPECT_EQ(rep.ratios().size(), 2u);
  EXPECT_THROW(boundary_completion({{0, rect(2, 2, 0, 1, 0, 1), full}}, 0.1), DimensionError);
}

TEST(Artifacts, PgmLayoutAndRoundTrip) {
  const Mask m = rect(200, 200, 10, 60, 20, 50);
  const auto p = scratch("mask.pgm");
  write_pgm(p, mask_image(m));
  std::ifstream in(p, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "P5 200 200 255\n";
  ASSERT_EQ(bytes.size(), header.size() + 40000);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  const auto back = read_pgm(p);
  EXPECT_EQ(back, mask_image(m));
  EXPECT_EQ(image_mask(back), m);
  EXPECT_EQ(artifact_name("scene_0", "afn", "pgm"), "scene_0_afn.pgm");
}

TEST(Artifacts, OverlayAndFeatureImages) {
  const auto empty = overlay_image(6, 8, {}, {});
  EXPECT_EQ(empty.width, 8u);
  EXPECT_EQ(empty.height, 6 + kLegendRows);
  EXPECT_EQ(empty.pixels.size(), 8 * (6 + kLegendRows) * 3);
  const auto p = scratch("legend.ppm");
  write_ppm(p, empty);
  EXPECT_GT(fs::file_size(p), empty.pixels.size());

  const auto t = rect(6, 8, 0, 2, 0, 2), q = rect(6, 8, 1, 3, 1, 3);
  const auto img = overlay_image(6, 8, {t}, {q});
  auto px = [&](std::size_t r, std::size_t c) {
    const std::size_t at = (r * 8 + c) * 3;
    return std::array<std::uint8_t, 3>{img.pixels[at], img.pixels[at + 1], img.pixels[at + 2]};
  };
  EXPECT_EQ(px(0, 0), kTruthColour);
  EXPECT_EQ(px(1, 1), kOverlapColour);
  EXPECT_EQ(px(2, 2), kPredictionColour);

  std::vector<float> f(4 * 4 * 2, 0.0f);
  f[0] = 3.0f;
  f[1] = 4.0f;
  const auto fi = feature_image(Tensor::constant({4, 4, 2}, f));
  EXPECT_EQ(fi.pixels[0], 255);
  EXPECT_EQ(fi.pixels[5], 0);
}

TEST(Checkpoint, RoundTripAndMismatch) {
  Model a(small_config());
  auto cfg = small_config();
  cfg.seed = 99;
  Model b(cfg);
  EXPECT_FALSE(same_parameters(a.params(), b.params()));
  const auto p = scratch("model.bin");
  save_checkpoint(a.params(), p);
  EXPECT_TRUE(fs::exists(p.string() + ".manifest"));
  load_checkpoint(b.params(), p);
  EXPECT_TRUE(same_parameters(a.params(), b.params()));

  auto other = small_config();
  other.decoder.queries = 12;
  Model c(other);
  EXPECT_THROW(load_checkpoint(c.params(), p), FormatError);
  EXPECT_THROW(load_checkpoint(c.params(), scratch("absent.bin")), IoError);
}

TEST(Training, ZeroStepsLeavesParametersAndIsDeterministic) {
  const auto cfg = small_config();
  Model init(cfg), a(cfg), b(cfg);
  const auto scenes = generate_scenes(cfg, 1, cfg.seed);
  ASSERT_EQ(scenes.size(), 1u);
  const auto examples = training_set(a, scenes);
  TrainConfig none = cfg.train;
  none.steps = 0;
  const auto r0 = train_toy(a, examples, none);
  EXPECT_TRUE(r0.losses.empty());
  EXPECT_TRUE(same_parameters(a.params(), init.params()));
  EXPECT_NEAR(r0.final_loss, batch_loss(init, examples), 1e-9 * std::abs(r0.final_loss));

  TrainConfig few = cfg.train;
  few.steps = 3;
  std::vector<std::size_t> seen;
  const auto ra = train_toy(a, examples, few, [&](std::size_t s, double) { seen.push_back(s); });
  const auto rb = train_toy(b, examples, few);
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2}));
  ASSERT_EQ(ra.losses, rb.losses);
  EXPECT_EQ(ra.final_loss, rb.final_loss);
  EXPECT_TRUE(same_parameters(a.params(), b.params()));
  EXPECT_FALSE(same_parameters(a.params(), init.params()));
  EXPECT_LT(ra.final_loss, ra.losses.front());
}

TEST(Training, SingleSceneOverfits) {
  const auto cfg = small_config();
  Model m(cfg);
  const auto examples = training_set(m, generate_scenes(cfg, 1, cfg.seed));
  TrainConfig run = cfg.train;
  run.steps = 300;
  const auto r = train_toy(m, examples, run);
  EXPECT_LT(r.final_loss, 0.2 * r.losses.front()) << r.losses.front() << " -> " << r.final_loss;
}

TEST(Training, DivergenceRaisesTrainingError) {
  const auto cfg = small_config();
  Model m(cfg);
  const auto examples = training_set(m, generate_scenes(cfg, 1, 1));
  TrainConfig wild = cfg.train;
  wild.steps = 5;
  wild.learning_rate = 1e30;
  wild.clip_norm = 1e30;
  EXPECT_THROW(train_toy(m, examples, wild), TrainingError);
}

TEST(Training, ScenesAreSeededPerIndex) {
  const auto cfg = small_config();
  const auto two = generate_scenes(cfg, 2, 5);
  const auto three = generate_scenes(cfg, 3, 5);
  ASSERT_EQ(two[1].scene.cloud.size(), three[1].scene.cloud.size());
  EXPECT_EQ(format_scene_spec(two[1].spec), format_scene_spec(three[1].spec));
  Model m(cfg);
  const auto out = infer(m, m.prepare(two[0].scene.cloud));
  for (const auto& d : out) {
    EXPECT_EQ(d.binary_mask.rows, cfg.raster_height);
    EXPECT_GT(d.score, cfg.nms.tau);
  }
}
