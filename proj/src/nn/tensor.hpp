#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "error.hpp"

namespace aid::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor. Two-dimensional views treat every leading axis as
// batch: rows() = numel / last extent, cols() = last extent. Storage is
// over-aligned so vectorized kernels round identically wherever the buffer lands.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() & { return data_; }
  std::span<const T> values() const& { return data_; }
  std::span<const T> values() && = delete;  // would dangle

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Row-major element access for rank-2 tensors.
  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void reshape(Shape shape);
  BasicTensor reshaped(Shape shape) const;
  void fill(T value);

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    std::copy(data_.begin(), data_.end(), out.data());
    return out;
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T, Eigen::aligned_allocator<T>> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Elementwise helpers. All require identical shapes.
template <typename T>
void add_inplace(BasicTensor<T>& dst, const BasicTensor<T>& src);
template <typename T>
void scale_inplace(BasicTensor<T>& dst, T factor);
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Row slicing along the flattened leading axis of a rank-2 view.
template <typename T>
BasicTensor<T> slice_rows(const BasicTensor<T>& x, std::size_t begin, std::size_t end);
template <typename T>
BasicTensor<T> concat_rows(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Swap the first two axes of a rank-3 tensor [a, b, c] -> [b, a, c].
template <typename T>
BasicTensor<T> swap01(const BasicTensor<T>& x);

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what);

template <typename T>
bool all_finite(const BasicTensor<T>& x);

}  // namespace aid::nn
