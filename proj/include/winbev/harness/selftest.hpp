// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace winbev {

struct SelfCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick oracle checks that run in a few seconds: attention reassociation,
/// Hungarian against exhaustive search, window round trip, PGM round trip,
/// analytic complexity ratio and small gradient checks. Scratch files go to
/// `scratch`.
std::vector<SelfCheck> run_selftest(std::uint64_t seed, const std::filesystem::path& scratch);

}  // namespace winbev
