#include "nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace aid::nn {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape_));
  }
  return shape_[axis];
}

template <typename T>
void BasicTensor<T>::reshape(Shape shape) {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  shape_ = std::move(shape);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  BasicTensor out = *this;
  out.reshape(std::move(shape));
  return out;
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
}

template <typename T>
void add_inplace(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  if (dst.numel() != src.numel()) require_same_shape(dst, src, "add");
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0, n = dst.numel(); i < n; ++i) d[i] += s[i];
}

template <typename T>
void scale_inplace(BasicTensor<T>& dst, T factor) {
  for (auto& v : dst.values()) v *= factor;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  BasicTensor<T> out = a;
  add_inplace(out, b);
  return out;
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "sub");
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
  return out;
}

template <typename T>
BasicTensor<T> slice_rows(const BasicTensor<T>& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.rows()) {
    throw DimensionError("row slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for shape " + shape_str(x.shape()));
  }
  const std::size_t c = x.cols();
  std::vector<T> data(x.data() + begin * c, x.data() + end * c);
  return BasicTensor<T>({end - begin, c}, std::move(data));
}

template <typename T>
BasicTensor<T> concat_rows(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.empty()) return b.reshaped({b.rows(), b.cols()});
  if (b.empty()) return a.reshaped({a.rows(), a.cols()});
  if (a.cols() != b.cols()) {
    throw DimensionError("concat: widths " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
  std::vector<T> data;
  data.reserve(a.numel() + b.numel());
  data.insert(data.end(), a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return BasicTensor<T>({a.rows() + b.rows(), a.cols()}, std::move(data));
}

template <typename T>
BasicTensor<T> swap01(const BasicTensor<T>& x) {
  if (x.rank() != 3) throw DimensionError("swap01 expects rank 3, got " + shape_str(x.shape()));
  const std::size_t a = x.dim(0), b = x.dim(1), c = x.dim(2);
  BasicTensor<T> out({b, a, c});
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      std::copy_n(x.data() + (i * b + j) * c, c, out.data() + (j * a + i) * c);
  return out;
}

template <typename T>
bool all_finite(const BasicTensor<T>& x) {
  for (auto v : x.values())
    if (!std::isfinite(v)) return false;
  return true;
}

#define AID_INSTANTIATE(T)                                                           \
  template class BasicTensor<T>;                                                     \
  template void require_same_shape(const BasicTensor<T>&, const BasicTensor<T>&,     \
                                   const char*);                                     \
  template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);                 \
  template void scale_inplace(BasicTensor<T>&, T);                                   \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> slice_rows(const BasicTensor<T>&, std::size_t, std::size_t); \
  template BasicTensor<T> concat_rows(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> swap01(const BasicTensor<T>&);                             \
  template bool all_finite(const BasicTensor<T>&);

AID_INSTANTIATE(float)
AID_INSTANTIATE(double)
#undef AID_INSTANTIATE

}  // namespace aid::nn
