// SPDX-License-Identifier: Apache-2.0
#include "winbev/harness/train.hpp"

#include <chrono>
#include <cmath>

#include "winbev/errors.hpp"
#include "winbev/inference/inference.hpp"
#include "winbev/matching/losses.hpp"
#include "winbev/numerics/ops.hpp"

namespace winbev {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor example_loss(const Model& model, const TrainingExample& ex) {
  const auto out = model.forward(ex.grid);
  return total_loss(out.decoder.layers, ex.gts, model.config().loss).loss;
}

class Optimizer {
 public:
  Optimizer(ParamStore& store, const TrainConfig& cfg) : store_(store), cfg_(cfg) {
    if (cfg.optimizer == "adam") {
      for (const auto& e : store.entries()) {
        m_.emplace_back(e.tensor.numel(), 0.0f);
        v_.emplace_back(e.tensor.numel(), 0.0f);
      }
    }
  }

  void step(double grad_scale) {
    ++t_;
    const float lr = static_cast<float>(cfg_.learning_rate);
    auto& entries = store_.entries();
    for (std::size_t p = 0; p < entries.size(); ++p) {
      auto& t = entries[p].tensor;
      if (!t.has_grad()) continue;
      const auto g = t.grad();
      auto w = t.mutable_values();
      if (cfg_.optimizer == "sgd") {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * static_cast<float>(grad_scale * g[i]);
        continue;
      }
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
      for (std::size_t i = 0; i < w.size(); ++i) {
        const float gi = static_cast<float>(grad_scale * g[i]);
        m_[p][i] = static_cast<float>(kBeta1 * m_[p][i] + (1 - kBeta1) * gi);
        v_[p][i] = static_cast<float>(kBeta2 * v_[p][i] + (1 - kBeta2) * gi * gi);
        const double mh = m_[p][i] / c1, vh = v_[p][i] / c2;
        w[i] -= static_cast<float>(cfg_.learning_rate * mh / (std::sqrt(vh) + 1e-8));
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999;
  ParamStore& store_;
  TrainConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

double grad_norm(const ParamStore& store) {
  double sq = 0;
  for (const auto& e : store.entries()) {
    if (!e.tensor.has_grad()) continue;
    for (float g : e.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

}  // namespace

std::vector<GeneratedScene> generate_scenes(const PipelineConfig& config, std::size_t count, std::uint64_t seed) {
  std::vector<GeneratedScene> out;
  const auto raster = config.raster();
  for (std::size_t i = 0; i < count; ++i) {
    GeneratedScene g;
    g.id = "scene" + std::to_string(i);
    const std::uint64_t s = mix(seed, i);
    g.spec = random_scene_spec(raster, config.scenes.min_objects, config.scenes.max_objects, s);
    g.spec.frame_id = g.id;
    g.spec.ground_density = config.scenes.ground_density;
    g.spec.face_density = config.scenes.face_density;
    g.scene = synth_scene(g.spec, raster, s);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<TrainingExample> training_set(const Model& model, const std::vector<GeneratedScene>& scenes) {
  std::vector<TrainingExample> out;
  for (const auto& s : scenes) out.push_back({model.prepare(s.scene.cloud), s.scene.instances});
  return out;
}

double batch_loss(const Model& model, const std::vector<TrainingExample>& examples) {
  double sum = 0;
  for (const auto& ex : examples) sum += example_loss(model, ex).item();
  return sum;
}

TrainResult train_toy(Model& model, const std::vector<TrainingExample>& examples, const TrainConfig& train,
                      const StepCallback& on_step) {
  if (examples.empty()) throw TrainingError("training needs at least one scene", 0);
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  Optimizer opt(model.params(), train);
  for (std::size_t step = 0; step < train.steps; ++step) {
    model.params().zero_grad();
    double loss = 0;
    try {
      for (const auto& ex : examples) {
        auto l = example_loss(model, ex);
        loss += l.item();
        l.backward();
      }
    } catch (const EvaluationError& e) {
      throw TrainingError(e.what(), step);
    }
    if (!std::isfinite(loss)) throw TrainingError("loss is not finite", step);
    const double norm = grad_norm(model.params());
    if (!std::isfinite(norm)) throw TrainingError("gradient is not finite", step);
    result.losses.push_back(loss);
    if (on_step) on_step(step, loss);
    opt.step(norm > train.clip_norm ? train.clip_norm / norm : 1.0);
  }
  try {
    result.final_loss = batch_loss(model, examples);
  } catch (const EvaluationError& e) {
    throw TrainingError(e.what(), train.steps);
  }
  if (!std::isfinite(result.final_loss)) throw TrainingError("loss is not finite", train.steps);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<DetectedInstance> infer(const Model& model, const SparseVoxelGrid& grid) {
  return select_and_suppress(model.forward(grid).instances(), model.config().nms);
}

}  // namespace winbev
