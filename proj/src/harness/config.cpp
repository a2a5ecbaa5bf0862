// SPDX-License-Identifier: Apache-2.0
#include "winbev/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <vector>

#include "winbev/errors.hpp"

namespace winbev {

namespace {

struct Key {
  std::string name;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || !std::isfinite(out)) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <typename M>
Key real(std::string name, M member) {
  return {name, [name, member](PipelineConfig& c, const std::string& v) { member(c) = to_double(name, v); },
          [member](const PipelineConfig& c) { return fmt(member(const_cast<PipelineConfig&>(c))); }};
}

template <typename M>
Key count(std::string name, M member) {
  return {name,
          [name, member](PipelineConfig& c, const std::string& v) {
            member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(to_uint(name, v));
          },
          [member](const PipelineConfig& c) { return std::to_string(member(const_cast<PipelineConfig&>(c))); }};
}

template <typename M>
Key flag(std::string name, M member) {
  return {name, [name, member](PipelineConfig& c, const std::string& v) { member(c) = to_bool(name, v); },
          [member](const PipelineConfig& c) {
            return std::string(member(const_cast<PipelineConfig&>(c)) ? "true" : "false");
          }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back(real("roi.x_min", [](PipelineConfig& c) -> double& { return c.roi.x_min; }));
    k.push_back(real("roi.x_max", [](PipelineConfig& c) -> double& { return c.roi.x_max; }));
    k.push_back(real("roi.y_min", [](PipelineConfig& c) -> double& { return c.roi.y_min; }));
    k.push_back(real("roi.y_max", [](PipelineConfig& c) -> double& { return c.roi.y_max; }));
    k.push_back(real("roi.z_min", [](PipelineConfig& c) -> double& { return c.roi.z_min; }));
    k.push_back(real("roi.z_max", [](PipelineConfig& c) -> double& { return c.roi.z_max; }));
    k.push_back(real("voxel.x", [](PipelineConfig& c) -> double& { return c.voxel.x; }));
    k.push_back(real("voxel.y", [](PipelineConfig& c) -> double& { return c.voxel.y; }));
    k.push_back(real("voxel.z", [](PipelineConfig& c) -> double& { return c.voxel.z; }));
    k.push_back(count("raster.height", [](PipelineConfig& c) -> std::size_t& { return c.raster_height; }));
    k.push_back(count("raster.width", [](PipelineConfig& c) -> std::size_t& { return c.raster_width; }));
    k.push_back(count("afn.c_enc", [](PipelineConfig& c) -> std::size_t& { return c.afn.c_enc; }));
    k.push_back(count("afn.channels", [](PipelineConfig& c) -> std::size_t& { return c.afn.channels; }));
    k.push_back(count("afn.height_bands", [](PipelineConfig& c) -> std::size_t& { return c.afn.height_bands; }));
    k.push_back({"afn.init_alpha",
                 [](PipelineConfig& c, const std::string& v) {
                   c.afn.init_alpha = static_cast<float>(to_double("afn.init_alpha", v));
                 },
                 [](const PipelineConfig& c) { return fmt(c.afn.init_alpha); }});
    k.push_back(count("ggit.tokens", [](PipelineConfig& c) -> std::size_t& { return c.afn.ggit.tokens; }));
    k.push_back(count("ggit.width", [](PipelineConfig& c) -> std::size_t& { return c.afn.ggit.width; }));
    k.push_back(count("ggit.peaks", [](PipelineConfig& c) -> std::size_t& { return c.afn.ggit.peaks; }));
    k.push_back(count("spcn.window", [](PipelineConfig& c) -> std::size_t& { return c.spcn.window; }));
    k.push_back({"spcn.depths",
                 [](PipelineConfig& c, const std::string& v) {
                   std::stringstream ss(v);
                   std::string item;
                   std::size_t i = 0;
                   while (std::getline(ss, item, ',')) {
                     if (i == kStages) throw ConfigError("spcn.depths: expected 4 comma-separated values");
                     c.spcn.depths[i++] = to_uint("spcn.depths", item);
                   }
                   if (i != kStages) throw ConfigError("spcn.depths: expected 4 comma-separated values");
                 },
                 [](const PipelineConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < kStages; ++i) s += (i ? "," : "") + std::to_string(c.spcn.depths[i]);
                   return s;
                 }});
    k.push_back(count("spcn.heads", [](PipelineConfig& c) -> std::size_t& { return c.spcn.heads; }));
    k.push_back(count("spcn.ffn_ratio", [](PipelineConfig& c) -> std::size_t& { return c.spcn.ffn_ratio; }));
    k.push_back(flag("spcn.normalize", [](PipelineConfig& c) -> bool& { return c.spcn.normalize; }));
    k.push_back(count("decoder.dim", [](PipelineConfig& c) -> std::size_t& { return c.decoder.dim; }));
    k.push_back(count("decoder.queries", [](PipelineConfig& c) -> std::size_t& { return c.decoder.queries; }));
    k.push_back(count("decoder.layers", [](PipelineConfig& c) -> std::size_t& { return c.decoder.layers; }));
    k.push_back(count("decoder.heads", [](PipelineConfig& c) -> std::size_t& { return c.decoder.heads; }));
    k.push_back(count("decoder.points", [](PipelineConfig& c) -> std::size_t& { return c.decoder.points; }));
    k.push_back(count("decoder.mask_dim", [](PipelineConfig& c) -> std::size_t& { return c.decoder.mask_dim; }));
    k.push_back(count("decoder.classes", [](PipelineConfig& c) -> std::size_t& { return c.decoder.classes; }));
    k.push_back(count("decoder.ffn_ratio", [](PipelineConfig& c) -> std::size_t& { return c.decoder.ffn_ratio; }));
    k.push_back(real("loss.cls", [](PipelineConfig& c) -> double& { return c.loss.cls; }));
    k.push_back(real("loss.mask", [](PipelineConfig& c) -> double& { return c.loss.mask; }));
    k.push_back(real("loss.dice", [](PipelineConfig& c) -> double& { return c.loss.dice; }));
    k.push_back(real("inference.tau", [](PipelineConfig& c) -> double& { return c.nms.tau; }));
    k.push_back(real("inference.iou_max", [](PipelineConfig& c) -> double& { return c.nms.iou_max; }));
    k.push_back(flag("inference.per_class", [](PipelineConfig& c) -> bool& { return c.nms.per_class; }));
    k.push_back(count("train.steps", [](PipelineConfig& c) -> std::size_t& { return c.train.steps; }));
    k.push_back(real("train.learning_rate", [](PipelineConfig& c) -> double& { return c.train.learning_rate; }));
    k.push_back(real("train.clip_norm", [](PipelineConfig& c) -> double& { return c.train.clip_norm; }));
    k.push_back({"train.optimizer", [](PipelineConfig& c, const std::string& v) { c.train.optimizer = v; },
                 [](const PipelineConfig& c) { return c.train.optimizer; }});
    k.push_back(count("scenes.count", [](PipelineConfig& c) -> std::size_t& { return c.scenes.count; }));
    k.push_back(count("scenes.min_objects", [](PipelineConfig& c) -> std::size_t& { return c.scenes.min_objects; }));
    k.push_back(count("scenes.max_objects", [](PipelineConfig& c) -> std::size_t& { return c.scenes.max_objects; }));
    k.push_back(real("scenes.ground_density", [](PipelineConfig& c) -> double& { return c.scenes.ground_density; }));
    k.push_back(real("scenes.face_density", [](PipelineConfig& c) -> double& { return c.scenes.face_density; }));
    k.push_back(real("eval.visibility_floor", [](PipelineConfig& c) -> double& { return c.visibility_floor; }));
    k.push_back(count("run.seed", [](PipelineConfig& c) -> std::uint64_t& { return c.seed; }));
    k.push_back(count("run.threads", [](PipelineConfig& c) -> std::size_t& { return c.threads; }));
    return k;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void check_extent(const char* axis, double span, double voxel, std::size_t cells) {
  const double exact = span / voxel;
  if (std::abs(exact - static_cast<double>(cells)) > 1e-6) {
    throw ConfigError(std::string("raster ") + axis + " = " + std::to_string(cells) + " cells does not match the ROI span " +
                      fmt(span) + " m at voxel " + fmt(voxel) + " m");
  }
}

}  // namespace

void PipelineConfig::validate() const {
  roi.validate();
  if (!(voxel.x > 0 && voxel.y > 0 && voxel.z > 0)) throw ConfigError("voxel sizes must be positive");
  check_extent("height", roi.x_max - roi.x_min, voxel.x, raster_height);
  check_extent("width", roi.y_max - roi.y_min, voxel.y, raster_width);
  if (afn.c_enc == 0 || afn.channels == 0 || afn.height_bands == 0) throw ConfigError("AFN widths must be positive");
  if (afn.ggit.tokens == 0 || afn.ggit.width == 0) throw ConfigError("GGIT needs at least one token and channel");
  SpcnConfig s = spcn;
  s.channels = afn.channels;
  validate_spcn(raster_height, raster_width, s);
  if (decoder.dim == 0 || decoder.heads == 0 || decoder.dim % decoder.heads != 0) {
    throw ConfigError("decoder.dim must be a positive multiple of decoder.heads");
  }
  if (decoder.layers == 0 || decoder.points == 0 || decoder.mask_dim == 0 || decoder.classes == 0) {
    throw ConfigError("decoder layers, points, mask_dim and classes must be positive");
  }
  if (decoder.queries < scenes.max_objects) {
    throw ConfigError("decoder.queries (" + std::to_string(decoder.queries) + ") below scenes.max_objects (" +
                      std::to_string(scenes.max_objects) + ")");
  }
  try {
    loss.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("loss: ") + e.what());
  }
  if (!(nms.tau >= 0 && nms.tau <= 1) || !(nms.iou_max >= 0 && nms.iou_max <= 1)) {
    throw ConfigError("inference thresholds must lie in [0, 1]");
  }
  if (!(train.learning_rate > 0) || !(train.clip_norm > 0)) throw ConfigError("learning rate and clip norm must be positive");
  if (train.optimizer != "sgd" && train.optimizer != "adam") {
    throw ConfigError("train.optimizer must be sgd or adam, got '" + train.optimizer + "'");
  }
  if (scenes.min_objects > scenes.max_objects) throw ConfigError("scenes.min_objects exceeds scenes.max_objects");
  if (!(visibility_floor >= 0 && visibility_floor <= 1)) throw ConfigError("eval.visibility_floor must lie in [0, 1]");
  if (threads == 0) throw ConfigError("run.threads must be at least 1");
}

PipelineConfig toy_config() {
  PipelineConfig c;
  c.roi = {0.0, 25.6, -12.8, 12.8, -3.0, 1.0};
  c.voxel = {0.8, 0.8, 0.5};
  c.raster_height = 32;
  c.raster_width = 32;
  c.afn.c_enc = 8;
  c.afn.channels = 16;
  c.afn.ggit = {4, 16, 4};
  c.spcn.window = 8;
  c.spcn.depths = {1, 1, 1, 1};
  c.spcn.heads = 4;
  c.spcn.ffn_ratio = 2;
  c.decoder.dim = 32;
  c.decoder.queries = 10;
  c.decoder.layers = 3;
  c.decoder.heads = 4;
  c.decoder.points = 2;
  c.decoder.mask_dim = 32;
  c.decoder.ffn_ratio = 2;
  c.train.steps = 500;
  c.seed = 7;
  return c;
}

PipelineConfig parse_config(std::istream& in, PipelineConfig base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = keys();
    auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return k.name == key; });
    if (it == table.end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    it->set(base, value);
  }
  base.validate();
  return base;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in, std::move(base));
}

std::string format_config(const PipelineConfig& config) {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

}  // namespace winbev
