// SPDX-License-Identifier: Apache-2.0
#include "winbev/harness/artifacts.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "winbev/errors.hpp"

namespace winbev {

namespace {

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("short write on " + path.string());
}

void write_pnm(const std::filesystem::path& path, const char* magic, std::size_t w, std::size_t h,
               const std::vector<std::uint8_t>& bytes) {
  auto out = open_out(path, true);
  out << magic << ' ' << w << ' ' << h << " 255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  finish(out, path);
}

// Next whitespace-delimited header field; skips '#' comments.
std::size_t header_field(std::istream& in, const std::string& file) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  std::size_t v = 0;
  if (!(in >> v)) throw FormatError("bad PGM header in " + file, static_cast<std::size_t>(std::max<std::streamoff>(0, in.tellg())));
  return v;
}

void paint(RgbImage& img, std::size_t r, std::size_t c, const std::array<std::uint8_t, 3>& rgb) {
  auto* p = &img.pixels[(r * img.width + c) * 3];
  std::copy(rgb.begin(), rgb.end(), p);
}

nlohmann::json optional_metric(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json("n/a"); }

}  // namespace

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) throw DimensionError("PGM pixel count does not match its size");
  write_pnm(path, "P5", image.width, image.height, image.pixels);
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') throw FormatError("not a binary PGM: " + path.string(), 0);
  GrayImage img;
  img.width = header_field(in, path.string());
  img.height = header_field(in, path.string());
  const std::size_t maxval = header_field(in, path.string());
  if (maxval != 255) throw FormatError("only 8-bit PGM is supported", static_cast<std::size_t>(in.tellg()));
  if (!std::isspace(in.get())) throw FormatError("missing separator after PGM header", static_cast<std::size_t>(in.tellg()));
  img.pixels.resize(img.width * img.height);
  const auto at = static_cast<std::size_t>(in.tellg());
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
    throw FormatError("PGM pixel data truncated", at + static_cast<std::size_t>(in.gcount()));
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  if (image.pixels.size() != image.width * image.height * 3) throw DimensionError("PPM pixel count does not match its size");
  write_pnm(path, "P6", image.width, image.height, image.pixels);
}

GrayImage mask_image(const Mask& mask) {
  GrayImage img{mask.cols, mask.rows, std::vector<std::uint8_t>(mask.cells.size())};
  for (std::size_t i = 0; i < mask.cells.size(); ++i) img.pixels[i] = mask.cells[i] ? 255 : 0;
  return img;
}

Mask image_mask(const GrayImage& image) {
  Mask m(image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) m.cells[i] = image.pixels[i] ? 1 : 0;
  return m;
}

GrayImage feature_image(const Tensor& feature) {
  if (feature.rank() != 3) throw DimensionError("feature image expects [H, W, C], got " + shape_str(feature.shape()));
  const std::size_t h = feature.dim(0), w = feature.dim(1), c = feature.dim(2);
  const auto v = feature.values();
  std::vector<double> norm(h * w);
  for (std::size_t p = 0; p < h * w; ++p) {
    double s = 0;
    for (std::size_t k = 0; k < c; ++k) s += static_cast<double>(v[p * c + k]) * v[p * c + k];
    norm[p] = std::sqrt(s);
  }
  const auto [lo, hi] = std::minmax_element(norm.begin(), norm.end());
  const double span = norm.empty() ? 0.0 : *hi - *lo;
  GrayImage img{w, h, std::vector<std::uint8_t>(h * w, 0)};
  for (std::size_t p = 0; p < h * w; ++p) {
    img.pixels[p] = span > 0 ? static_cast<std::uint8_t>(std::lround(255.0 * (norm[p] - *lo) / span)) : 0;
  }
  return img;
}

RgbImage overlay_image(std::size_t rows, std::size_t cols, const std::vector<Mask>& truth,
                       const std::vector<Mask>& predictions) {
  RgbImage img{cols, rows + kLegendRows, std::vector<std::uint8_t>(cols * (rows + kLegendRows) * 3, 24)};
  Mask t(rows, cols), p(rows, cols);
  for (const auto& m : truth) t = mask_or(t, m);
  for (const auto& m : predictions) p = mask_or(p, m);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (t.at(r, c) && p.at(r, c)) paint(img, r, c, kOverlapColour);
      else if (t.at(r, c)) paint(img, r, c, kTruthColour);
      else if (p.at(r, c)) paint(img, r, c, kPredictionColour);
    }
  }
  // legend: truth swatch, prediction swatch, overlap swatch
  const std::size_t swatch = std::max<std::size_t>(1, cols / 4);
  const std::array<std::array<std::uint8_t, 3>, 3> colours{kTruthColour, kPredictionColour, kOverlapColour};
  for (std::size_t r = rows + 2; r + 2 < rows + kLegendRows; ++r) {
    for (std::size_t k = 0; k < colours.size(); ++k) {
      const std::size_t c0 = k * (swatch + swatch / 4) + 1;
      for (std::size_t c = c0; c < std::min(cols, c0 + swatch); ++c) paint(img, r, c, colours[k]);
    }
  }
  return img;
}

std::string artifact_name(const std::string& scene, const std::string& stage, const std::string& ext) {
  return scene + "_" + stage + "." + ext;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["ap50"] = optional_metric(report.ap50);
  j["ap70"] = optional_metric(report.ap70);
  j["map"] = optional_metric(report.map);
  j["miou"] = optional_metric(report.miou);
  for (const auto& [c, ap] : report.ap50_per_class) j["per_class"][std::to_string(c)]["ap50"] = ap;
  for (const auto& [c, ap] : report.ap70_per_class) j["per_class"][std::to_string(c)]["ap70"] = ap;
  j["scenes"] = nlohmann::json::array();
  for (const auto& s : report.scenes) j["scenes"].push_back({{"ground_truths", s.ground_truths}, {"detections", s.detections}});
  return j;
}

nlohmann::json to_json(const BoundaryReport& report) {
  nlohmann::json j;
  j["histogram"] = report.histogram;
  j["below_floor"] = report.below_floor;
  j["empty_full"] = report.empty_full;
  j["instances"] = nlohmann::json::array();
  for (const auto& [id, r] : report.best_ratio) j["instances"].push_back({{"instance", id}, {"ratio", r}});
  return j;
}

nlohmann::json to_json(const ComplexityReport& report) {
  nlohmann::json j{{"height", report.height}, {"width", report.width},         {"window", report.window},
                   {"dim", report.dim},       {"omega_spcn", report.omega_spcn}, {"omega_global", report.omega_global},
                   {"ratio", report.ratio}};
  if (report.measured) {
    const auto& m = *report.measured;
    j["measured"] = {{"window_softmax", m.window_softmax},
                     {"window_linear", m.window_linear},
                     {"global_softmax", m.global_softmax},
                     {"ratio", m.ratio}};
  }
  return j;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  auto out = open_out(path, false);
  out << doc.dump(2) << '\n';
  finish(out, path);
}

void write_counter_csv(const std::filesystem::path& path, const std::vector<OpCounter::Record>& records) {
  auto out = open_out(path, false);
  out << "kernel,N,d,mults\n";
  for (const auto& r : records) out << r.kernel << ',' << r.n << ',' << r.d << ',' << r.mults << '\n';
  finish(out, path);
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses) {
  auto out = open_out(path, false);
  out << "step,loss\n" << std::setprecision(9);
  for (std::size_t i = 0; i < losses.size(); ++i) out << i << ',' << losses[i] << '\n';
  finish(out, path);
}

void write_counts_csv(const std::filesystem::path& path, const EvalReport& report,
                      const std::vector<std::string>& scene_ids) {
  auto out = open_out(path, false);
  out << "scene,ground_truths,detections\n";
  for (std::size_t i = 0; i < report.scenes.size(); ++i) {
    out << (i < scene_ids.size() ? scene_ids[i] : std::to_string(i)) << ',' << report.scenes[i].ground_truths << ','
        << report.scenes[i].detections << '\n';
  }
  finish(out, path);
}

}  // namespace winbev
