#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "texsyn/error.hpp"

namespace texsyn {

using Shape = std::vector<std::size_t>;

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major tensor. The shape is fixed at construction; elements are
/// mutable so gradients can be accumulated in place.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {
    check_extents();
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != element_count(shape_)) {
      throw ShapeError("tensor data has " + std::to_string(data_.size()) +
                       " elements, shape " + to_string(shape_) + " needs " +
                       std::to_string(element_count(shape_)));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Rank-3 (maps, rows, cols) accessors.
  T& operator()(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  const T& operator()(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  // Rank-2 accessors.
  T& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Contiguous view of map `c` of a rank-3 tensor.
  std::span<T> map(std::size_t c) {
    const std::size_t plane = shape_[1] * shape_[2];
    return std::span<T>(data_).subspan(c * plane, plane);
  }
  std::span<const T> map(std::size_t c) const {
    const std::size_t plane = shape_[1] * shape_[2];
    return std::span<const T>(data_).subspan(c * plane, plane);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  void require_same_shape(const Tensor& other, const char* op) const {
    if (shape_ != other.shape_) {
      throw ShapeError(std::string(op) + ": shape " + to_string(shape_) + " vs " +
                       to_string(other.shape_));
    }
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_extents() const {
    for (auto e : shape_) {
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

enum class CropSide { front, back };
enum class FlipAxis { lr, ud };

namespace detail {
template <typename T>
void require_rank3(const Tensor<T>& t, const char* op) {
  if (t.rank() != 3) {
    throw ShapeError(std::string(op) + " expects a [maps,H,W] tensor, got " + to_string(t.shape()));
  }
}
}  // namespace detail

/// Removes `delta` columns from the front (columns 0..delta-1) or back
/// (columns W-delta..W-1) of every map. Returns a fresh contiguous tensor.
template <typename T>
Tensor<T> crop_columns(const Tensor<T>& t, CropSide side, std::size_t delta) {
  detail::require_rank3(t, "crop_columns");
  const std::size_t maps = t.extent(0), h = t.extent(1), w = t.extent(2);
  if (delta >= w) {
    throw EmptyOverlap("crop_columns: delta " + std::to_string(delta) + " >= width " +
                       std::to_string(w));
  }
  const std::size_t kept = w - delta;
  const std::size_t offset = side == CropSide::front ? delta : 0;
  Tensor<T> out({maps, h, kept});
  for (std::size_t c = 0; c < maps; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < kept; ++x) out(c, y, x) = t(c, y, x + offset);
  return out;
}

/// Row analogue of crop_columns.
template <typename T>
Tensor<T> crop_rows(const Tensor<T>& t, CropSide side, std::size_t delta) {
  detail::require_rank3(t, "crop_rows");
  const std::size_t maps = t.extent(0), h = t.extent(1), w = t.extent(2);
  if (delta >= h) {
    throw EmptyOverlap("crop_rows: delta " + std::to_string(delta) + " >= height " +
                       std::to_string(h));
  }
  const std::size_t kept = h - delta;
  const std::size_t offset = side == CropSide::front ? delta : 0;
  Tensor<T> out({maps, kept, w});
  for (std::size_t c = 0; c < maps; ++c)
    for (std::size_t y = 0; y < kept; ++y)
      for (std::size_t x = 0; x < w; ++x) out(c, y, x) = t(c, y + offset, x);
  return out;
}

template <typename T>
Tensor<T> flip(const Tensor<T>& t, FlipAxis axis) {
  detail::require_rank3(t, "flip");
  const std::size_t maps = t.extent(0), h = t.extent(1), w = t.extent(2);
  Tensor<T> out(t.shape());
  for (std::size_t c = 0; c < maps; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        if (axis == FlipAxis::lr)
          out(c, y, x) = t(c, y, w - 1 - x);
        else
          out(c, y, x) = t(c, h - 1 - y, x);
      }
  return out;
}

/// Sequential dot product in index order, accumulated in double. Every
/// reduction in the library uses this order so results do not depend on
/// the thread count.
template <typename T>
double dot(std::span<const T> a, std::span<const T> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <typename T>
double inner_product(const Tensor<T>& a, const Tensor<T>& b) {
  a.require_same_shape(b, "inner_product");
  return dot<T>(a.data(), b.data());
}

template <typename T>
double squared_norm(const Tensor<T>& a) {
  return dot<T>(a.data(), a.data());
}

}  // namespace texsyn
