// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "winbev/numerics/layers.hpp"

namespace winbev {

/// Writes `path` (packed little-endian float32 in store order) and
/// `path` + ".manifest" (one "name shape offset count" line per tensor).
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);

/// Loads values into an identically structured store. Throws FormatError on a
/// name, shape or size mismatch, IoError when a file cannot be opened.
void load_checkpoint(ParamStore& store, const std::filesystem::path& path);

bool same_parameters(const ParamStore& a, const ParamStore& b);

}  // namespace winbev
