// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "winbev/harness/evaluate.hpp"
#include "winbev/numerics/op_counter.hpp"
#include "winbev/numerics/tensor.hpp"
#include "winbev/spcn/complexity.hpp"

namespace winbev {

struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
  bool operator==(const GrayImage&) const = default;
};

struct RgbImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB triplets
};

// Header "P5 <w> <h> 255\n" then w*h bytes.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

// Set cells become 255.
GrayImage mask_image(const Mask& mask);
// Any nonzero pixel becomes a set cell.
Mask image_mask(const GrayImage& image);
// Per-cell feature L2 norm of an [H, W, C] map, stretched to 0..255.
GrayImage feature_image(const Tensor& feature);

inline constexpr std::size_t kLegendRows = 12;
inline constexpr std::array<std::uint8_t, 3> kTruthColour{40, 200, 60};
inline constexpr std::array<std::uint8_t, 3> kPredictionColour{170, 170, 170};
inline constexpr std::array<std::uint8_t, 3> kOverlapColour{200, 255, 200};

/// Ground truth over predictions on a dark background, with a legend band
/// below the raster. Produced even when both sets are empty.
RgbImage overlay_image(std::size_t rows, std::size_t cols, const std::vector<Mask>& truth,
                       const std::vector<Mask>& predictions);

// "<scene>_<stage>.<ext>"
std::string artifact_name(const std::string& scene, const std::string& stage, const std::string& ext);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const BoundaryReport& report);
nlohmann::json to_json(const ComplexityReport& report);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

void write_counter_csv(const std::filesystem::path& path, const std::vector<OpCounter::Record>& records);
void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses);
void write_counts_csv(const std::filesystem::path& path, const EvalReport& report,
                      const std::vector<std::string>& scene_ids);

}  // namespace winbev
