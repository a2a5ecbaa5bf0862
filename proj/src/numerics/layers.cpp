// SPDX-License-Identifier: Apache-2.0
#include "winbev/numerics/layers.hpp"

#include <algorithm>
#include <cmath>

#include "winbev/errors.hpp"
#include "winbev/numerics/ops.hpp"

namespace winbev {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (find(name)) throw ConfigError("duplicate parameter name: " + name);
  entries_.push_back({name, std::move(t)});
  return entries_.back().tensor;
}

Tensor* ParamStore::find(const std::string& name) {
  for (auto& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::vector<float> Initializer::uniform(std::size_t n, float bound) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng_);
  return v;
}

std::vector<float> Initializer::normal(std::size_t n, float stddev) {
  std::normal_distribution<float> dist(0.0f, stddev);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng_);
  return v;
}

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
               Initializer& init, bool with_bias) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(in));
  weight = store.add(name + ".weight", Tensor::parameter({in, out}, init.uniform(in * out, bound)));
  if (with_bias) {
    bias = store.add(name + ".bias", Tensor::parameter({out}, std::vector<float>(out, 0.0f)));
  }
}

Tensor Linear::operator()(const Tensor& x) const {
  auto y = ops::matmul(x, weight);
  return bias.defined() ? ops::add(y, bias) : y;
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
               std::size_t extent, std::size_t dil, Initializer& init)
    : dilation(dil) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(in * extent * extent));
  kernel = store.add(name + ".kernel", Tensor::parameter({extent, extent, in, out},
                                                         init.uniform(extent * extent * in * out, bound)));
}

Tensor Conv2d::operator()(const Tensor& x) const { return ops::conv2d(x, kernel, dilation); }

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, std::size_t width) {
  gamma = store.add(name + ".gamma", Tensor::parameter({width}, std::vector<float>(width, 1.0f)));
  beta = store.add(name + ".beta", Tensor::parameter({width}, std::vector<float>(width, 0.0f)));
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return ops::add(ops::mul(ops::layer_norm_last(x, eps), gamma), beta);
}

void assign(Tensor& t, const std::vector<float>& values) {
  if (values.size() != t.numel()) {
    throw DimensionError("assign: " + std::to_string(values.size()) + " values for shape " +
                         shape_str(t.shape()));
  }
  std::copy(values.begin(), values.end(), t.mutable_values().begin());
}

void fill(Tensor& t, float value) {
  auto v = t.mutable_values();
  std::fill(v.begin(), v.end(), value);
}

}  // namespace winbev
