// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace winbev {

// Worker count used by parallel kernels. Defaults to 1; results never depend on it
// because every index writes a disjoint output slice.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Runs fn(i) for i in [0, n) split into contiguous chunks across worker threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace winbev
