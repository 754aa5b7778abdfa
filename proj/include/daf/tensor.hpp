#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace daf {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

inline std::string shape_to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense row-major tensor. Plain value type: copies are deep, there are no
/// views, and a tensor never aliases another. All layouts are
/// [height, width, channel] for rank-3 data and [kh, kw, c_in, c_out] for
/// convolution kernels.
template <typename T>
struct TensorT {
  Shape shape;
  std::vector<T> data;

  TensorT() = default;

  explicit TensorT(Shape s, T fill = T(0)) : shape(std::move(s)) {
    validate_extents(shape);
    data.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
  }

  TensorT(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    validate_extents(shape);
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_to_string(shape));
    }
  }

  static TensorT vector(std::initializer_list<T> v) {
    return TensorT(Shape{static_cast<int>(v.size())}, std::vector<T>(v));
  }

  static TensorT scalar(T v) { return TensorT(Shape{1}, std::vector<T>{v}); }

  static TensorT zeros(Shape s) { return TensorT(std::move(s), T(0)); }
  static TensorT ones(Shape s) { return TensorT(std::move(s), T(1)); }

  int rank() const { return static_cast<int>(shape.size()); }
  std::size_t size() const { return data.size(); }
  int extent(int axis) const { return shape[static_cast<std::size_t>(axis)]; }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  T& at2(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
  const T& at2(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

  T& at3(int i, int j, int k) {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  const T& at3(int i, int j, int k) const {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }

  T& at4(int i, int j, int k, int l) {
    return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  const T& at4(int i, int j, int k, int l) const {
    return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  T min_value() const {
    T m = data.empty() ? T(0) : data[0];
    for (T v : data) m = std::min(m, v);
    return m;
  }

  T max_value() const {
    T m = data.empty() ? T(0) : data[0];
    for (T v : data) m = std::max(m, v);
    return m;
  }

  /// Sum in double precision regardless of T.
  double sum() const {
    double s = 0.0;
    for (T v : data) s += static_cast<double>(v);
    return s;
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

 private:
  static void validate_extents(const Shape& s) {
    for (int e : s) {
      if (e <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_to_string(s));
    }
  }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace daf
