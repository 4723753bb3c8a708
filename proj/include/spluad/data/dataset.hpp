#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spluad/core/rng.hpp"
#include "spluad/core/tensor.hpp"

namespace spluad::data {

enum class Label { live = 0, physical_attack = 1, digital_attack = 2 };

inline constexpr std::size_t kNumLabels = 3;

inline const char* label_name(Label l) {
  switch (l) {
    case Label::live: return "live";
    case Label::physical_attack: return "physical_attack";
    case Label::digital_attack: return "digital_attack";
  }
  return "?";
}

inline std::optional<Label> parse_label(const std::string& s) {
  if (s == "live") return Label::live;
  if (s == "physical_attack") return Label::physical_attack;
  if (s == "digital_attack") return Label::digital_attack;
  return std::nullopt;
}

struct Sample {
  std::string id;
  Tensor image;        // [H, W, 3] in [0, 1]
  Label label = Label::live;
  std::string family;  // empty for live samples

  bool bona_fide() const { return label == Label::live; }
};

using Dataset = std::vector<Sample>;

inline void validate_sample(const Sample& s) {
  require(s.bona_fide() == s.family.empty(), ErrorCode::input,
          "sample " + s.id + ": live samples carry no family and attacks must carry one");
}

inline std::array<std::size_t, kNumLabels> label_histogram(const Dataset& ds) {
  std::array<std::size_t, kNumLabels> h{};
  for (const auto& s : ds) ++h[static_cast<std::size_t>(s.label)];
  return h;
}

// ---- binary portable pixmap (P6, maxval 255) ----

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  require(image.rank() == 3 && image.dim(2) == 3, ErrorCode::dimension,
          "write_ppm: expected [H, W, 3], got " + shape_string(image.shape()));
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot open " + path.string() + " for writing");
  out << "P6\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  std::vector<char> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) bytes[i] = static_cast<char>(to_byte(image[i]));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorCode::io, "write failed for " + path.string());
}

inline Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::loader, "cannot open image " + path.string());
  auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    return t;
  };
  require(token() == "P6", ErrorCode::loader, path.string() + ": not a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    fail(ErrorCode::loader, path.string() + ": malformed PPM header");
  }
  require(w > 0 && h > 0 && maxval == 255, ErrorCode::loader,
          path.string() + ": only 8-bit PPM images are supported");
  std::vector<char> bytes(w * h * 3);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<std::size_t>(in.gcount()) == bytes.size(), ErrorCode::loader,
          path.string() + ": truncated pixel data");
  Tensor img({h, w, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img[i] = static_cast<double>(static_cast<unsigned char>(bytes[i])) / 255.0;
  return img;
}

// ---- manifest: CSV with header id,path,label,family ----

inline constexpr const char* kManifestHeader = "id,path,label,family";

// Writes images under <dir>/images and <dir>/manifest.csv with relative paths.
inline std::filesystem::path write_corpus(const std::filesystem::path& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  const fs::path manifest = dir / "manifest.csv";
  std::ofstream out(manifest);
  require(out.good(), ErrorCode::io, "cannot open " + manifest.string() + " for writing");
  out << kManifestHeader << '\n';
  for (const auto& s : ds) {
    validate_sample(s);
    const std::string rel = "images/" + s.id + ".ppm";
    write_ppm(dir / rel, s.image);
    out << s.id << ',' << rel << ',' << label_name(s.label) << ',' << s.family << '\n';
  }
  require(out.good(), ErrorCode::io, "write failed for " + manifest.string());
  return manifest;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

// Loads every row in order. Relative image paths resolve against the
// manifest's directory. image_size = 0 skips the size check.
inline Dataset load_manifest(const std::filesystem::path& path, std::size_t image_size = 0) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::loader, "manifest not found: " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::loader,
          path.string() + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == kManifestHeader, ErrorCode::loader,
          path.string() + ": header must be '" + std::string(kManifestHeader) + "'");
  const auto base = path.parent_path();
  Dataset ds;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const std::string where = path.string() + ":" + std::to_string(row) + ": ";
    const auto f = split_csv_line(line);
    require(f.size() == 4, ErrorCode::loader,
            where + "expected 4 fields, got " + std::to_string(f.size()));
    const auto label = parse_label(f[2]);
    require(label.has_value(), ErrorCode::loader, where + "bad label '" + f[2] + "'");
    Sample s;
    s.id = f[0];
    s.label = *label;
    s.family = f[3];
    require(!s.id.empty(), ErrorCode::loader, where + "empty id");
    require(s.bona_fide() == s.family.empty(), ErrorCode::loader,
            where + "family must be empty for live rows and present for attack rows");
    std::filesystem::path img = f[1];
    if (img.is_relative()) img = base / img;
    try {
      s.image = read_ppm(img);
    } catch (const Error& e) {
      fail(ErrorCode::loader, where + e.what());
    }
    if (image_size)
      require(s.image.shape() == Shape{image_size, image_size, 3}, ErrorCode::loader,
              where + "image is " + shape_string(s.image.shape()) + ", expected " +
                  std::to_string(image_size) + "x" + std::to_string(image_size));
    ds.push_back(std::move(s));
  }
  return ds;
}

// ---- stratified split ----

struct SplitResult {
  Dataset train;
  Dataset eval;
};

// Per label, a seeded shuffle picks round(fraction * n) training samples
// (at least one on each side). Both halves keep the input order.
inline SplitResult split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorCode::split,
          "train fraction must lie in (0, 1)");
  std::vector<bool> to_train(ds.size(), false);
  Rng rng(seed);
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (static_cast<std::size_t>(ds[i].label) == l) idx.push_back(i);
    if (idx.empty()) continue;
    require(idx.size() >= 2, ErrorCode::split,
            std::string("label ") + label_name(static_cast<Label>(l)) +
                " has fewer than 2 samples; cannot split");
    rng.shuffle(idx);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t i = 0; i < n_train; ++i) to_train[idx[i]] = true;
  }
  SplitResult r;
  for (std::size_t i = 0; i < ds.size(); ++i) (to_train[i] ? r.train : r.eval).push_back(ds[i]);
  return r;
}

}  // namespace spluad::data
