#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cat/error.hpp"

namespace cat {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major array. Copies are deep, so a value handed to an operation
// can never be changed behind that operation's back.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(1, T{}) {}

  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
    check_extents();
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  // Negative indices count from the back.
  std::int64_t dim(int i) const {
    const int r = rank();
    const int k = i < 0 ? r + i : i;
    if (k < 0 || k >= r) {
      throw DimensionError("dimension index " + std::to_string(i) + " out of range for shape " +
                           shape_str(shape_));
    }
    return shape_[static_cast<std::size_t>(k)];
  }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  T item() const {
    if (data_.size() != 1) {
      throw DimensionError("item() on tensor of shape " + shape_str(shape_));
    }
    return data_[0];
  }

  Tensor reshape(Shape shape) const& {
    Tensor out(*this);
    return std::move(out).reshape(std::move(shape));
  }

  Tensor reshape(Shape shape) && {
    if (shape_numel(shape) != size()) {
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    shape_ = std::move(shape);
    check_extents();
    return std::move(*this);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_extents() const {
    for (auto e : shape_) {
      if (e < 1) throw DimensionError("non-positive extent in shape " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

}  // namespace cat
