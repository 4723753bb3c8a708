#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spluad/core/error.hpp"

namespace spluad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major array of doubles. A scalar is shape {1}.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    require(data_.size() == shape_size(shape_), ErrorCode::dimension,
            "tensor data length " + std::to_string(data_.size()) +
                " does not match shape " + shape_string(shape_));
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  static Tensor vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      require(row.size() == c, ErrorCode::dimension, "ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Rows/cols view the tensor as a matrix whose last axis is the columns.
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
  std::size_t rows() const { return cols() ? data_.size() / cols() : 0; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  Tensor reshaped(Shape shape) const {
    require(shape_size(shape) == data_.size(), ErrorCode::dimension,
            "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
  }

  double item() const {
    require(data_.size() == 1, ErrorCode::dimension,
            "item() on tensor of shape " + shape_string(shape_));
    return data_[0];
  }

  bool all_finite() const noexcept {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_shape() const {
    for (std::size_t d : shape_)
      require(d > 0, ErrorCode::dimension,
              "tensor shape must be positive, got " + shape_string(shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorCode::dimension, "max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// FNV-1a over the raw bytes of every value; used for bit-exact checksums.
inline std::uint64_t fnv1a(std::span<const double> values,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
  for (std::size_t i = 0; i < values.size() * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace spluad
