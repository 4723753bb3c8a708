#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spluad/core/error.hpp"

namespace spluad::train {

namespace fs = std::filesystem;

inline constexpr const char* kRunManifestName = "run.json";

inline std::uint64_t fnv1a_bytes(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_file_bytes(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::io, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Creates an empty run directory. An existing non-empty directory is left
// alone unless `force`, in which case it is cleared first.
inline void prepare_run_dir(const fs::path& dir, bool force) {
  require(!dir.empty(), ErrorCode::config, "an output directory is required (--out)");
  if (fs::exists(dir)) {
    require(fs::is_directory(dir), ErrorCode::io, dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      require(force, ErrorCode::io, "run directory " + dir.string() + " already exists; pass --force to overwrite");
      fs::remove_all(dir);
    }
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::io, "cannot create " + dir.string() + ": " + ec.message());
}

// Every regular file under `dir` except the manifest itself, relative and
// sorted, with size and FNV-1a content hash.
inline nlohmann::json list_run_files(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel != kRunManifestName) names.push_back(rel);
  }
  std::sort(names.begin(), names.end());
  auto files = nlohmann::json::array();
  for (const auto& n : names) {
    const auto bytes = read_file_bytes(dir / n);
    files.push_back({{"path", n}, {"bytes", bytes.size()}, {"fnv1a", hex64(fnv1a_bytes(bytes))}});
  }
  return files;
}

// Written last: command, config snapshot, seed, a hash over the inputs and
// the file list. Contains nothing time- or host-dependent, so a repeated run
// reproduces it byte for byte.
inline void write_run_manifest(const fs::path& dir, const std::string& command, const nlohmann::json& config,
                               std::uint64_t seed, const std::string& input_hash) {
  nlohmann::json m{{"command", command},
                   {"config", config},
                   {"seed", seed},
                   {"input_hash", input_hash},
                   {"files", list_run_files(dir)}};
  std::ofstream os(dir / kRunManifestName);
  if (!os) fail(ErrorCode::io, "cannot write " + (dir / kRunManifestName).string());
  os << m.dump(2) << '\n';
}

}  // namespace spluad::train
