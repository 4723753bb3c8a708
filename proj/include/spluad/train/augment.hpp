#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "spluad/core/rng.hpp"
#include "spluad/core/tensor.hpp"

namespace spluad::train {

enum class Directive { light, strong };

enum class StrongKind { cutout, noise, blur };

inline const char* strong_kind_name(StrongKind k) {
  switch (k) {
    case StrongKind::cutout: return "cutout";
    case StrongKind::noise: return "noise";
    case StrongKind::blur: return "blur";
  }
  return "?";
}

inline void check_image(const Tensor& image) {
  require(image.rank() == 3 && image.dim(2) == 3 && image.dim(0) == image.dim(1), ErrorCode::input,
          "augment: expected a square [H, W, 3] image, got " + shape_string(image.shape()));
}

inline void clamp_unit(Tensor& image) {
  for (double& v : image.values()) v = std::clamp(v, 0.0, 1.0);
}

// Optional horizontal flip, then brightness scaled by (1 + jitter).
inline Tensor apply_light(const Tensor& image, bool flip, double jitter) {
  check_image(image);
  const std::size_t n = image.dim(0);
  Tensor out(image.shape());
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const std::size_t sx = flip ? n - 1 - x : x;
      for (std::size_t c = 0; c < 3; ++c)
        out[(y * n + x) * 3 + c] = image[(y * n + sx) * 3 + c] * (1.0 + jitter);
    }
  clamp_unit(out);
  return out;
}

// Sets the side x side square at (top, left) to 0.5 gray.
inline Tensor apply_cutout(const Tensor& image, std::size_t top, std::size_t left, std::size_t side) {
  check_image(image);
  const std::size_t n = image.dim(0);
  require(top + side <= n && left + side <= n, ErrorCode::input, "cutout: square outside the image");
  Tensor out = image;
  for (std::size_t y = top; y < top + side; ++y)
    for (std::size_t x = left; x < left + side; ++x)
      for (std::size_t c = 0; c < 3; ++c) out[(y * n + x) * 3 + c] = 0.5;
  return out;
}

inline Tensor apply_noise(const Tensor& image, double sigma, Rng& rng) {
  check_image(image);
  Tensor out = image;
  for (double& v : out.values()) v += rng.normal(0.0, sigma);
  clamp_unit(out);
  return out;
}

// 2x box downsample followed by nearest-neighbour upsample. Odd sizes keep
// their last row/column.
inline Tensor apply_blur(const Tensor& image) {
  check_image(image);
  const std::size_t n = image.dim(0);
  Tensor out = image;
  for (std::size_t y = 0; y + 1 < n; y += 2)
    for (std::size_t x = 0; x + 1 < n; x += 2)
      for (std::size_t c = 0; c < 3; ++c) {
        const double m = (image[(y * n + x) * 3 + c] + image[(y * n + x + 1) * 3 + c] +
                          image[((y + 1) * n + x) * 3 + c] + image[((y + 1) * n + x + 1) * 3 + c]) /
                         4.0;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) out[((y + dy) * n + x + dx) * 3 + c] = m;
      }
  return out;
}

// What an augmentation call did, for logging and tests.
struct AugmentRecord {
  bool flip = false;
  double jitter = 0.0;
  bool strong = false;
  StrongKind kind = StrongKind::cutout;
  std::size_t cutout_top = 0, cutout_left = 0, cutout_side = 0;
};

struct AugmentOptions {
  double max_jitter = 0.1;
  double noise_sigma = 0.05;
  double cutout_min_area = 0.10;
  double cutout_max_area = 0.25;
};

// light: random flip and brightness jitter. strong: light plus one of
// cutout / Gaussian noise / down-up blur, chosen uniformly. Output in [0, 1].
inline Tensor augment(const Tensor& image, Directive directive, Rng& rng,
                      AugmentRecord* record = nullptr, const AugmentOptions& opt = {}) {
  check_image(image);
  AugmentRecord rec;
  rec.flip = rng.bernoulli(0.5);
  rec.jitter = rng.uniform(-opt.max_jitter, opt.max_jitter);
  Tensor out = apply_light(image, rec.flip, rec.jitter);
  if (directive == Directive::strong) {
    rec.strong = true;
    rec.kind = static_cast<StrongKind>(rng.index(3));
    const std::size_t n = image.dim(0);
    switch (rec.kind) {
      case StrongKind::cutout: {
        // Side rounded into the range whose squares stay within the area bounds.
        const double nn = static_cast<double>(n * n);
        const double area = rng.uniform(opt.cutout_min_area, opt.cutout_max_area) * nn;
        const auto lo = static_cast<std::size_t>(std::ceil(std::sqrt(opt.cutout_min_area * nn)));
        const auto hi = std::max(lo, static_cast<std::size_t>(std::floor(std::sqrt(opt.cutout_max_area * nn))));
        rec.cutout_side = std::min(n, std::clamp<std::size_t>(
                                          static_cast<std::size_t>(std::lround(std::sqrt(area))), lo, hi));
        rec.cutout_top = rng.index(n - rec.cutout_side + 1);
        rec.cutout_left = rng.index(n - rec.cutout_side + 1);
        out = apply_cutout(out, rec.cutout_top, rec.cutout_left, rec.cutout_side);
        break;
      }
      case StrongKind::noise: out = apply_noise(out, opt.noise_sigma, rng); break;
      case StrongKind::blur: out = apply_blur(out); break;
    }
  }
  if (record) *record = rec;
  return out;
}

inline Tensor augment(const Tensor& image, Directive directive, std::uint64_t seed,
                      AugmentRecord* record = nullptr) {
  Rng rng(seed);
  return augment(image, directive, rng, record);
}

}  // namespace spluad::train
