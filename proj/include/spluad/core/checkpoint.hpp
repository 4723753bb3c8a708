#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "spluad/core/tensor.hpp"

namespace spluad {

// Flat archive of named tensors.
//
// Layout (all integers and floats little-endian):
//   "SPLUADCK"            8-byte magic
//   u32 version           currently 1
//   u64 entry_count
//   entry_count x {
//     u32 name_length, name bytes (UTF-8, dotted path)
//     u32 rank, u64 dims[rank]
//     f64 values[product(dims)]
//   }
// Entries are written in lexicographic name order. A companion text manifest
// (`<archive>.manifest`) lists one `name<TAB>shape` line per entry.
using TensorMap = std::map<std::string, Tensor>;

namespace checkpoint_detail {

constexpr char kMagic[8] = {'S', 'P', 'L', 'U', 'A', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    v = std::bit_cast<T>(bytes);
  }
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) fail(ErrorCode::io, "truncated checkpoint: " + path);
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    v = std::bit_cast<T>(bytes);
  }
  return v;
}

}  // namespace checkpoint_detail

inline std::string manifest_path_for(const std::filesystem::path& archive) {
  return archive.string() + ".manifest";
}

inline void write_checkpoint(const std::filesystem::path& path, const TensorMap& tensors) {
  using namespace checkpoint_detail;
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::io, "cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, tensors.size());
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(os, d);
    for (double v : t.values()) put<double>(os, v);
  }
  if (!os) fail(ErrorCode::io, "failed writing checkpoint: " + path.string());

  std::ofstream ms(manifest_path_for(path));
  if (!ms) fail(ErrorCode::io, "cannot write manifest: " + manifest_path_for(path));
  ms << "# name\tshape\n";
  for (const auto& [name, t] : tensors) ms << name << '\t' << shape_string(t.shape()) << '\n';
}

inline TensorMap read_checkpoint(const std::filesystem::path& path) {
  using namespace checkpoint_detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::io, "cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    fail(ErrorCode::io, "not a checkpoint archive: " + path.string());
  const auto version = get<std::uint32_t>(is, path.string());
  if (version != kVersion)
    fail(ErrorCode::io, "unsupported checkpoint version " + std::to_string(version) + ": " +
                            path.string());
  const auto count = get<std::uint64_t>(is, path.string());
  TensorMap out;
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto len = get<std::uint32_t>(is, path.string());
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rank = get<std::uint32_t>(is, path.string());
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(is, path.string()));
    Tensor t(shape);
    for (double& v : t.values()) v = get<double>(is, path.string());
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace spluad
