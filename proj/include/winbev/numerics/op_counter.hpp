// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace winbev {

/// Tallies scalar multiply-accumulates per named kernel.
class OpCounter {
 public:
  struct Record {
    std::string kernel;
    std::uint64_t n = 0;  // sequence length seen by the kernel
    std::uint64_t d = 0;  // feature width
    std::uint64_t mults = 0;
  };

  void add(const std::string& kernel, std::uint64_t n, std::uint64_t d, std::uint64_t mults) {
    std::lock_guard lock(mu_);
    totals_[kernel] += mults;
    records_.push_back({kernel, n, d, mults});
  }

  std::uint64_t mults(const std::string& kernel) const {
    std::lock_guard lock(mu_);
    auto it = totals_.find(kernel);
    return it == totals_.end() ? 0 : it->second;
  }

  std::uint64_t total() const {
    std::lock_guard lock(mu_);
    std::uint64_t t = 0;
    for (const auto& [_, v] : totals_) t += v;
    return t;
  }

  std::vector<Record> records() const {
    std::lock_guard lock(mu_);
    return records_;
  }

  void reset() {
    std::lock_guard lock(mu_);
    totals_.clear();
    records_.clear();
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::uint64_t> totals_;
  std::vector<Record> records_;
};

}  // namespace winbev
