// SPDX-License-Identifier: Apache-2.0
#include "winbev/harness/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "winbev/errors.hpp"

namespace winbev {

namespace {

std::filesystem::path manifest_path(const std::filesystem::path& p) { return p.string() + ".manifest"; }

std::string shape_token(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out.empty() ? "scalar" : out;
}

void put_le(std::ofstream& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
  std::ofstream bin(path, std::ios::binary);
  std::ofstream man(manifest_path(path));
  if (!bin || !man) throw IoError("cannot write checkpoint " + path.string());
  std::size_t offset = 0;
  for (const auto& e : store.entries()) {
    const auto v = e.tensor.values();
    man << e.name << ' ' << shape_token(e.tensor.shape()) << ' ' << offset << ' ' << v.size() << '\n';
    for (float x : v) put_le(bin, x);
    offset += v.size() * 4;
  }
  if (!bin || !man) throw IoError("short write on checkpoint " + path.string());
}

void load_checkpoint(ParamStore& store, const std::filesystem::path& path) {
  std::ifstream bin(path, std::ios::binary);
  std::ifstream man(manifest_path(path));
  if (!bin || !man) throw IoError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  std::size_t line_no = 0, expected = 0;
  std::string line;
  for (auto& e : store.entries()) {
    if (!std::getline(man, line)) throw FormatError("manifest ends before parameter " + e.name);
    ++line_no;
    std::istringstream ls(line);
    std::string name, shape;
    std::size_t offset = 0, count = 0;
    if (!(ls >> name >> shape >> offset >> count)) {
      throw FormatError("manifest line " + std::to_string(line_no) + " is malformed");
    }
    if (name != e.name || shape != shape_token(e.tensor.shape())) {
      throw FormatError("manifest line " + std::to_string(line_no) + " holds " + name + " " + shape + ", expected " +
                        e.name + " " + shape_token(e.tensor.shape()));
    }
    if (offset != expected || count != e.tensor.numel() || offset + 4 * count > bytes.size()) {
      throw FormatError("parameter " + name + " does not fit the data file", offset);
    }
    auto dst = e.tensor.mutable_values();
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[offset + 4 * i + b]) << (8 * b);
      dst[i] = std::bit_cast<float>(bits);
    }
    expected = offset + 4 * count;
  }
  if (std::getline(man, line) && !line.empty()) throw FormatError("manifest lists more parameters than the model");
  if (expected != bytes.size()) throw FormatError("trailing bytes in checkpoint data", expected);
}

bool same_parameters(const ParamStore& a, const ParamStore& b) {
  const auto& ea = a.entries();
  const auto& eb = b.entries();
  if (ea.size() != eb.size()) return false;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    if (ea[i].name != eb[i].name || ea[i].tensor.shape() != eb[i].tensor.shape()) return false;
    const auto va = ea[i].tensor.values(), vb = eb[i].tensor.values();
    if (std::memcmp(va.data(), vb.data(), va.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

}  // namespace winbev
