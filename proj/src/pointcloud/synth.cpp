// SPDX-License-Identifier: Apache-2.0
#include "winbev/pointcloud/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "winbev/errors.hpp"

namespace winbev {

namespace {

struct Vec3 {
  double x, y, z;
};

double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

// Oriented box in world space with helpers for local-frame queries.
struct Box {
  VehicleSpec spec;
  double ground_z;
  double ux, uy;  // heading axis
  double vx, vy;  // lateral axis

  Box(const VehicleSpec& s, double gz)
      : spec(s), ground_z(gz), ux(std::cos(s.yaw)), uy(std::sin(s.yaw)), vx(-uy), vy(ux) {}

  Vec3 to_local(const Vec3& p) const {
    const double dx = p.x - spec.cx;
    const double dy = p.y - spec.cy;
    return {dx * ux + dy * uy, dx * vx + dy * vy, p.z - ground_z};
  }

  bool contains_xy(double x, double y) const {
    const auto l = to_local({x, y, ground_z});
    return std::abs(l.x) <= spec.length / 2 && std::abs(l.y) <= spec.width / 2;
  }

  // True when the open segment from `a` towards `b` passes through the box.
  bool blocks(const Vec3& a, const Vec3& b) const {
    const auto la = to_local(a);
    const auto lb = to_local(b);
    const std::array<double, 3> lo{-spec.length / 2, -spec.width / 2, 0.0};
    const std::array<double, 3> hi{spec.length / 2, spec.width / 2, spec.height};
    const std::array<double, 3> p0{la.x, la.y, la.z};
    const std::array<double, 3> d{lb.x - la.x, lb.y - la.y, lb.z - la.z};
    double t0 = 0.0;
    double t1 = 1.0 - 1e-9;
    for (int ax = 0; ax < 3; ++ax) {
      if (std::abs(d[ax]) < 1e-12) {
        if (p0[ax] < lo[ax] || p0[ax] > hi[ax]) return false;
        continue;
      }
      double ta = (lo[ax] - p0[ax]) / d[ax];
      double tb = (hi[ax] - p0[ax]) / d[ax];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return false;
    }
    return true;
  }
};

std::array<std::pair<double, double>, 4> corners(const VehicleSpec& v) {
  const double c = std::cos(v.yaw), s = std::sin(v.yaw);
  const double hl = v.length / 2, hw = v.width / 2;
  std::array<std::pair<double, double>, 4> out;
  const double sx[4] = {1, -1, -1, 1};
  const double sy[4] = {1, 1, -1, -1};
  for (int k = 0; k < 4; ++k) {
    const double lx = sx[k] * hl, ly = sy[k] * hw;
    out[k] = {v.cx + lx * c - ly * s, v.cy + lx * s + ly * c};
  }
  return out;
}

}  // namespace

bool footprints_overlap(const VehicleSpec& a, const VehicleSpec& b) {
  const auto ca = corners(a);
  const auto cb = corners(b);
  // Separating axis test over the four edge normals.
  for (const auto* v : {&a, &b}) {
    for (double ang : {v->yaw, v->yaw + std::numbers::pi / 2}) {
      const double ax = std::cos(ang), ay = std::sin(ang);
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (const auto& [x, y] : ca) {
        amin = std::min(amin, x * ax + y * ay);
        amax = std::max(amax, x * ax + y * ay);
      }
      for (const auto& [x, y] : cb) {
        bmin = std::min(bmin, x * ax + y * ay);
        bmax = std::max(bmax, x * ax + y * ay);
      }
      if (amax <= bmin || bmax <= amin) return false;
    }
  }
  return true;
}

Mask rasterize_footprint(const VehicleSpec& v, const BevRaster& raster) {
  Mask m(raster.height, raster.width);
  const Box box(v, 0.0);
  for (std::size_t i = 0; i < raster.height; ++i) {
    for (std::size_t j = 0; j < raster.width; ++j) {
      const auto [x, y] = raster.cell_center(i, j);
      if (box.contains_xy(x, y)) m.set(i, j);
    }
  }
  if (m.empty()) {
    if (auto cell = raster.cell_of(v.cx, v.cy)) m.set(cell->first, cell->second);
  }
  return m;
}

SceneSpec parse_scene_spec(std::istream& in) {
  SceneSpec spec;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    auto fail = [&](const std::string& why) {
      throw SceneError("scene spec line " + std::to_string(line_no) + ": " + why);
    };
    if (key == "frame_id") {
      if (!(ls >> spec.frame_id)) fail("frame_id needs a value");
    } else if (key == "ground_z") {
      if (!(ls >> spec.ground_z)) fail("ground_z needs a number");
    } else if (key == "ground_density") {
      if (!(ls >> spec.ground_density) || spec.ground_density < 0) fail("bad ground_density");
    } else if (key == "face_density") {
      if (!(ls >> spec.face_density) || spec.face_density < 0) fail("bad face_density");
    } else if (key == "object") {
      VehicleSpec v;
      if (!(ls >> v.class_id >> v.cx >> v.cy >> v.yaw >> v.length >> v.width >> v.height)) {
        fail("object needs: class cx cy yaw length width height");
      }
      if (v.class_id < 0 || v.length <= 0 || v.width <= 0 || v.height <= 0) {
        fail("object class must be >= 0 and extents positive");
      }
      spec.objects.push_back(v);
    } else {
      fail("unknown directive '" + key + "'");
    }
    std::string extra;
    if (ls >> extra) fail("trailing token '" + extra + "'");
  }
  return spec;
}

std::string format_scene_spec(const SceneSpec& spec) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "frame_id " << spec.frame_id << "\n";
  os << "ground_z " << spec.ground_z << "\n";
  os << "ground_density " << spec.ground_density << "\n";
  os << "face_density " << spec.face_density << "\n";
  for (const auto& v : spec.objects) {
    os << "object " << v.class_id << ' ' << v.cx << ' ' << v.cy << ' ' << v.yaw << ' ' << v.length << ' '
       << v.width << ' ' << v.height << "\n";
  }
  return os.str();
}

SyntheticScene synth_scene(const SceneSpec& spec, const BevRaster& raster, std::uint64_t seed) {
  for (std::size_t a = 0; a < spec.objects.size(); ++a) {
    for (std::size_t b = a + 1; b < spec.objects.size(); ++b) {
      if (footprints_overlap(spec.objects[a], spec.objects[b])) {
        throw SceneError("objects " + std::to_string(a) + " and " + std::to_string(b) + " overlap");
      }
    }
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec3 sensor{0.0, 0.0, 0.0};
  const RoiBounds& roi = raster.roi;

  std::vector<Box> boxes;
  for (const auto& v : spec.objects) boxes.emplace_back(v, spec.ground_z);

  auto occluded = [&](const Vec3& p, std::ptrdiff_t skip) {
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      if (static_cast<std::ptrdiff_t>(b) == skip) continue;
      if (boxes[b].blocks(sensor, p)) return true;
    }
    return false;
  };

  SyntheticScene scene;
  scene.cloud.frame_id = spec.frame_id;
  for (const auto& v : spec.objects) {
    auto footprint = rasterize_footprint(v, raster);
    scene.instances.push_back({v.class_id, footprint, footprint.area()});
    scene.observed.emplace_back(raster.height, raster.width);
    scene.point_counts.push_back(0);
  }

  // Ground returns, skipping the area under vehicles and shadowed rays.
  const double ground_area = (roi.x_max - roi.x_min) * (roi.y_max - roi.y_min);
  const auto n_ground = static_cast<std::size_t>(std::llround(ground_area * spec.ground_density));
  for (std::size_t n = 0; n < n_ground; ++n) {
    const Vec3 p{roi.x_min + unit(rng) * (roi.x_max - roi.x_min), roi.y_min + unit(rng) * (roi.y_max - roi.y_min),
                 spec.ground_z};
    const double refl = 0.05 + 0.25 * unit(rng);
    if (!roi.contains(p.x, p.y, p.z)) continue;
    if (std::any_of(boxes.begin(), boxes.end(), [&](const Box& b) { return b.contains_xy(p.x, p.y); })) continue;
    if (occluded(p, -1)) continue;
    scene.cloud.points.push_back({static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z),
                                  static_cast<float>(refl)});
  }

  // Vehicle surfaces: four sides and the roof.
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const Box& box = boxes[b];
    const auto& v = box.spec;
    struct Face {
      Vec3 normal;
      double area;
    };
    const std::array<Face, 5> faces{{
        {{box.ux, box.uy, 0}, v.width * v.height},
        {{-box.ux, -box.uy, 0}, v.width * v.height},
        {{box.vx, box.vy, 0}, v.length * v.height},
        {{-box.vx, -box.vy, 0}, v.length * v.height},
        {{0, 0, 1}, v.length * v.width},
    }};
    for (std::size_t f = 0; f < faces.size(); ++f) {
      const auto count = static_cast<std::size_t>(std::llround(faces[f].area * spec.face_density));
      for (std::size_t n = 0; n < count; ++n) {
        const double s = unit(rng) - 0.5;
        const double t = unit(rng);
        const double refl = 0.4 + 0.5 * unit(rng);
        double lu = 0, lv = 0, lz = 0;  // local coordinates on the face
        switch (f) {
          case 0: lu = v.length / 2; lv = s * v.width; lz = t * v.height; break;
          case 1: lu = -v.length / 2; lv = s * v.width; lz = t * v.height; break;
          case 2: lu = (t - 0.5) * v.length; lv = v.width / 2; lz = (s + 0.5) * v.height; break;
          case 3: lu = (t - 0.5) * v.length; lv = -v.width / 2; lz = (s + 0.5) * v.height; break;
          default: lu = s * v.length; lv = (t - 0.5) * v.width; lz = v.height; break;
        }
        const Vec3 p{v.cx + lu * box.ux + lv * box.vx, v.cy + lu * box.uy + lv * box.vy, spec.ground_z + lz};
        const Vec3 to_sensor{sensor.x - p.x, sensor.y - p.y, sensor.z - p.z};
        if (dot(faces[f].normal, to_sensor) <= 0) continue;
        if (!roi.contains(p.x, p.y, p.z)) continue;
        if (occluded(p, static_cast<std::ptrdiff_t>(b))) continue;
        scene.cloud.points.push_back({static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z),
                                      static_cast<float>(refl)});
        if (auto cell = raster.cell_of(p.x, p.y)) {
          if (scene.instances[b].footprint_mask.at(cell->first, cell->second)) {
            scene.observed[b].set(cell->first, cell->second);
          }
        }
        ++scene.point_counts[b];
      }
    }
  }
  return scene;
}

SceneSpec random_scene_spec(const BevRaster& raster, std::size_t min_objects, std::size_t max_objects,
                            std::uint64_t seed) {
  if (min_objects > max_objects) throw SceneError("min_objects exceeds max_objects");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const RoiBounds& roi = raster.roi;
  const double margin = 3.0;

  for (int attempt = 0; attempt < 1000; ++attempt) {
    SceneSpec spec;
    spec.frame_id = "scene" + std::to_string(seed);
    const auto target = min_objects + static_cast<std::size_t>(unit(rng) * static_cast<double>(max_objects - min_objects + 1));
    const std::size_t want = std::min(target, max_objects);
    for (int tries = 0; tries < 200 && spec.objects.size() < want; ++tries) {
      VehicleSpec v;
      v.class_id = 0;
      v.cx = std::max(roi.x_min, 3.0) + margin + unit(rng) * (roi.x_max - std::max(roi.x_min, 3.0) - 2 * margin);
      v.cy = roi.y_min + margin + unit(rng) * (roi.y_max - roi.y_min - 2 * margin);
      v.yaw = (unit(rng) - 0.5) * std::numbers::pi;
      v.length = 3.8 + unit(rng);
      v.width = 1.7 + 0.3 * unit(rng);
      v.height = 1.4 + 0.3 * unit(rng);
      // Keep a gap between vehicles so footprints never share a raster cell.
      VehicleSpec padded = v;
      padded.length += 1.5;
      padded.width += 1.5;
      bool clash = false;
      for (const auto& o : spec.objects) clash = clash || footprints_overlap(padded, o);
      if (!clash) spec.objects.push_back(v);
    }
    if (spec.objects.size() < min_objects) continue;
    const auto scene = synth_scene(spec, raster, seed);
    const bool all_visible = std::all_of(scene.point_counts.begin(), scene.point_counts.end(),
                                         [](std::size_t n) { return n > 0; });
    if (all_visible) return spec;
  }
  throw SceneError("could not place " + std::to_string(min_objects) + " visible vehicles in the ROI");
}

}  // namespace winbev
