// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "winbev/numerics/tensor.hpp"

namespace winbev {

/// Named collection of learnable leaves. Insertion order is the canonical order
/// used by checkpoints and optimizers.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  Tensor& add(const std::string& name, Tensor t);
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  Tensor* find(const std::string& name);
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

// Deterministic initialiser shared by all parameter constructors.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  std::vector<float> uniform(std::size_t n, float bound);
  std::vector<float> normal(std::size_t n, float stddev);
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// y = x W + b with W stored [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;  // undefined when constructed without bias

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
         Initializer& init, bool with_bias = true);

  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

/// Bias-free odd-extent convolution with zero "same" padding.
struct Conv2d {
  Tensor kernel;  // [k, k, Cin, Cout]
  std::size_t dilation = 1;

  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
         std::size_t extent, std::size_t dilation, Initializer& init);

  Tensor operator()(const Tensor& x) const;
};

/// Layer normalisation over the last axis followed by a per-channel affine map.
struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, std::size_t width);

  Tensor operator()(const Tensor& x) const;
};

// Overwrites a parameter's values in place (test and checkpoint helper).
void assign(Tensor& t, const std::vector<float>& values);
void fill(Tensor& t, float value);

}  // namespace winbev
