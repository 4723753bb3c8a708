#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "spluad/data/dataset.hpp"

namespace spluad::data {

struct SynthConfig {
  std::size_t live = 600;
  std::size_t physical = 300;
  std::size_t digital = 300;
  std::size_t image_size = 32;
  double alpha = 0.8;  // cue strength
  std::uint64_t seed = 1;

  void validate() const {
    require(image_size >= 8, ErrorCode::config, "synthetic image_size must be at least 8");
    require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::config, "cue strength alpha must lie in [0, 1]");
  }
};

namespace synth_detail {

using Rgb = std::array<double, 3>;

inline Tensor quantize(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) v = static_cast<double>(to_byte(v)) / 255.0;
  return out;
}

inline double smoothstep_edge(double r, double sharpness) { return 1.0 / (1.0 + std::exp((r - 1.0) * sharpness)); }

inline double gauss(double dx, double dy, double s) { return std::exp(-(dx * dx + dy * dy) / (2.0 * s * s)); }

// Unquantized live "face": textured background, soft elliptical face with
// eyes and mouth, faint sensor noise.
inline Tensor face_base(std::size_t n, Rng& rng) {
  const double s = static_cast<double>(n);
  const Rgb bg{rng.uniform(0.15, 0.7), rng.uniform(0.15, 0.7), rng.uniform(0.15, 0.7)};
  const Rgb skin{rng.uniform(0.55, 0.85), rng.uniform(0.4, 0.65), rng.uniform(0.3, 0.55)};
  const double cx = s * rng.uniform(0.42, 0.58), cy = s * rng.uniform(0.42, 0.58);
  const double rx = s * rng.uniform(0.24, 0.32), ry = s * rng.uniform(0.3, 0.38);
  const double tex_f = rng.uniform(0.5, 2.0) / s, tex_phase = rng.uniform(0.0, 6.28);
  const double eye_dx = rx * rng.uniform(0.35, 0.5), eye_y = cy - ry * rng.uniform(0.15, 0.3);
  const double mouth_y = cy + ry * rng.uniform(0.4, 0.55);
  Tensor img({n, n, 3});
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      const double tex = 0.08 * std::sin(2.0 * std::numbers::pi * tex_f * (px + 0.6 * py) + tex_phase) +
                         0.04 * (py / s - 0.5);
      const double r = std::hypot((px - cx) / rx, (py - cy) / ry);
      const double face = smoothstep_edge(r, 10.0);
      const double eyes = gauss(px - (cx - eye_dx), py - eye_y, s * 0.035) +
                          gauss(px - (cx + eye_dx), py - eye_y, s * 0.035);
      const double mouth = std::exp(-std::pow((px - cx) / (rx * 0.4), 2.0) -
                                    std::pow((py - mouth_y) / (s * 0.03), 2.0));
      for (std::size_t c = 0; c < 3; ++c) {
        double v = (1.0 - face) * (bg[c] + tex) + face * skin[c];
        v -= face * (0.45 * eyes + (c == 0 ? 0.1 : 0.3) * mouth);
        v += rng.normal(0.0, 0.01);
        img[(y * n + x) * 3 + c] = v;
      }
    }
  return img;
}

// Additive cue fields at full strength (alpha = 1). Physical cues are global:
// every recapture loses contrast, then replay adds a screen grid and print a
// desaturated halftone. Digital cues are local high-frequency patches with a
// soft blending boundary, built from 2x2 cells aligned to even coordinates
// so a 2x box down/up resample keeps them.
inline double recapture(double v) { return 0.35 * (0.5 - v); }

inline Tensor replay_cue(const Tensor& base, Rng& rng) {
  const std::size_t n = base.dim(0);
  // Screen pixel grid: dark lines every `period` pixels along one or both
  // axes, plus a faint interference band and a cool tint.
  const std::size_t period = 3 + rng.index(2);
  const std::size_t axes = rng.index(3);  // 0 rows, 1 columns, 2 both
  const double band_f = rng.uniform(0.03, 0.08), band_phase = rng.uniform(0.0, 6.28);
  const Rgb tint{-0.05, 0.0, 0.07};
  Tensor cue({n, n, 3});
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const bool line = (axes != 1 && y % period == 0) || (axes != 0 && x % period == 0);
      const double band = 0.06 * std::sin(2.0 * std::numbers::pi * band_f * static_cast<double>(x + y) + band_phase);
      const double m = (line ? -0.4 : 0.06) + band;
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t i = (y * n + x) * 3 + c;
        cue[i] = recapture(base[i]) + m + tint[c];
      }
    }
  return cue;
}

inline Tensor print_cue(const Tensor& base, Rng& rng) {
  const std::size_t n = base.dim(0);
  // Desaturation toward gray, a paper tint and a halftone dot lattice.
  const double period = rng.uniform(3.5, 4.5);
  const Rgb paper{0.05, 0.03, -0.04};
  Tensor cue({n, n, 3});
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double* p = base.data().data() + (y * n + x) * 3;
      const double gray = (p[0] + p[1] + p[2]) / 3.0;
      const double dots = 0.25 * std::cos(2.0 * std::numbers::pi * static_cast<double>(x) / period) *
                          std::cos(2.0 * std::numbers::pi * static_cast<double>(y) / period);
      for (std::size_t c = 0; c < 3; ++c)
        cue[(y * n + x) * 3 + c] = recapture(p[c]) + 0.7 * (gray - p[c]) + dots + paper[c];
    }
  return cue;
}

// Soft disc mask around a random point in the central region.
inline std::vector<double> blend_mask(std::size_t n, Rng& rng) {
  const double s = static_cast<double>(n);
  const double cx = s * rng.uniform(0.3, 0.7), cy = s * rng.uniform(0.3, 0.7);
  const double radius = s * rng.uniform(0.28, 0.38);
  std::vector<double> m(n * n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double r = std::hypot(static_cast<double>(x) + 0.5 - cx, static_cast<double>(y) + 0.5 - cy);
      m[y * n + x] = smoothstep_edge(r / radius, 6.0);
    }
  return m;
}

inline Tensor swap_cue(const Tensor& base, Rng& rng) {
  const std::size_t n = base.dim(0);
  const auto mask = blend_mask(n, rng);
  const double amp = rng.uniform(0.35, 0.45);
  Tensor cue({n, n, 3});
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double checker = ((x / 2 + y / 2) % 2 == 0) ? amp : -amp;
      for (std::size_t c = 0; c < 3; ++c) cue[(y * n + x) * 3 + c] = mask[y * n + x] * checker;
    }
  return cue;
}

inline Tensor edit_cue(const Tensor& base, Rng& rng) {
  const std::size_t n = base.dim(0);
  const auto mask = blend_mask(n, rng);
  const double amp = rng.uniform(0.35, 0.45);
  const Rgb shift{0.08, -0.06, 0.0};
  Tensor cue({n, n, 3});
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double stripe = ((y / 2) % 2 == 0) ? amp : -amp;
      for (std::size_t c = 0; c < 3; ++c) cue[(y * n + x) * 3 + c] = mask[y * n + x] * (stripe + shift[c]);
    }
  return cue;
}

inline Tensor apply_cue(const Tensor& base, const Tensor& cue, double alpha) {
  Tensor out = base;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * cue[i];
  return quantize(out);
}

inline std::string pad_id(const char* prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 5) digits.insert(0, 5 - digits.size(), '0');
  return std::string(prefix) + digits;
}

}  // namespace synth_detail

// Physical families alternate replay/print and digital families swap/edit.
// Attack j of each kind reuses the base of live sample j (mod live count), so
// with alpha = 0 every attack equals its live image pixel for pixel. Pixel
// values are multiples of 1/255, which makes the PPM round trip exact.
inline Dataset generate(const SynthConfig& config) {
  using namespace synth_detail;
  config.validate();
  const std::size_t n = config.image_size;
  const std::size_t n_bases = std::max<std::size_t>(config.live, 1);
  Rng root(config.seed);
  std::vector<Tensor> bases;
  bases.reserve(n_bases);
  for (std::size_t i = 0; i < n_bases; ++i) {
    Rng r = root.fork();
    bases.push_back(face_base(n, r));
  }
  Dataset ds;
  ds.reserve(config.live + config.physical + config.digital);
  for (std::size_t i = 0; i < config.live; ++i)
    ds.push_back({pad_id("live_", i), quantize(bases[i]), Label::live, ""});
  Rng cue_rng = root.fork();
  for (std::size_t j = 0; j < config.physical; ++j) {
    const Tensor& base = bases[j % n_bases];
    Rng r = cue_rng.fork();
    const bool replay = j % 2 == 0;
    const Tensor cue = replay ? replay_cue(base, r) : print_cue(base, r);
    ds.push_back({pad_id("phys_", j), apply_cue(base, cue, config.alpha), Label::physical_attack,
                  replay ? "replay" : "print"});
  }
  for (std::size_t j = 0; j < config.digital; ++j) {
    const Tensor& base = bases[(config.physical + j) % n_bases];
    Rng r = cue_rng.fork();
    const bool swap = j % 2 == 0;
    const Tensor cue = swap ? swap_cue(base, r) : edit_cue(base, r);
    ds.push_back({pad_id("dig_", j), apply_cue(base, cue, config.alpha), Label::digital_attack,
                  swap ? "swap" : "edit"});
  }
  return ds;
}

}  // namespace spluad::data
