// SPDX-License-Identifier: Apache-2.0
// Built with fast-math; see src/CMakeLists.txt.
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "winbev/errors.hpp"
#include "winbev/numerics/parallel.hpp"
#include "winbev/spcn/attention.hpp"

namespace winbev {

void softmax_attention_streaming(std::span<const float> q, std::span<const float> k, std::span<const float> v,
                                 std::size_t n, std::size_t d, std::span<float> out, OpCounter* counter,
                                 const std::string& kernel) {
  if (q.size() != n * d || k.size() != n * d || v.size() != n * d || out.size() != n * d) {
    throw DimensionError("streaming attention buffers must hold N*d values");
  }
  const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(d));
  parallel_for(n, [&](std::size_t i) {
    thread_local std::vector<float> scores;
    scores.resize(n);
    const float* qi = q.data() + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const float* kj = k.data() + j * d;
      float s = 0.0f;
      for (std::size_t c = 0; c < d; ++c) s += qi[c] * kj[c];
      scores[j] = s * inv_sqrt_d;
    }
    float mx = std::numeric_limits<float>::lowest();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, scores[j]);
    float total = 0.0f;
    for (std::size_t j = 0; j < n; ++j) {
      scores[j] = std::exp(scores[j] - mx);
      total += scores[j];
    }
    for (std::size_t c = 0; c < d; ++c) {
      float acc = 0.0f;
      for (std::size_t j = 0; j < n; ++j) acc += scores[j] * v[j * d + c];
      out[i * d + c] = acc / total;
    }
  });
  if (counter) counter->add(kernel, n, d, 2ULL * n * n * d);
}

}  // namespace winbev
