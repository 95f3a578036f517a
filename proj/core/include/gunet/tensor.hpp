#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "gunet/errors.hpp"

namespace gunet {

/// Dense row-major n-dimensional array over float or double.
///
/// Tensors are plain values: copy copies the buffer, there are no strided
/// views. Hot loops index through data() directly; at() is for tests and
/// glue code.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> dims)
      : dims_(std::move(dims)), data_(checked_count(dims_), T{}) {}

  Tensor(std::vector<std::int64_t> dims, std::vector<T> values)
      : dims_(std::move(dims)), data_(std::move(values)) {
    if (static_cast<std::int64_t>(data_.size()) != checked_count(dims_)) {
      throw ShapeError("tensor value count does not match dims");
    }
  }

  static Tensor zeros(std::vector<std::int64_t> dims) { return Tensor(std::move(dims)); }

  static Tensor full(std::vector<std::int64_t> dims, T value) {
    Tensor t(std::move(dims));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const std::vector<std::int64_t>& dims() const { return dims_; }
  int rank() const { return static_cast<int>(dims_.size()); }

  std::int64_t dim(int i) const {
    if (i < 0 || i >= rank()) throw ShapeError("tensor dim index out of range");
    return dims_[static_cast<std::size_t>(i)];
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::int64_t flat) { return data_[static_cast<std::size_t>(flat)]; }
  const T& operator[](std::int64_t flat) const { return data_[static_cast<std::size_t>(flat)]; }

  template <typename... Ix>
  T& at(Ix... ix) {
    return data_[static_cast<std::size_t>(offset_of({static_cast<std::int64_t>(ix)...}))];
  }

  template <typename... Ix>
  const T& at(Ix... ix) const {
    return data_[static_cast<std::size_t>(offset_of({static_cast<std::int64_t>(ix)...}))];
  }

  std::int64_t offset_of(std::initializer_list<std::int64_t> ix) const {
    if (static_cast<int>(ix.size()) != rank()) throw ShapeError("index rank mismatch");
    std::int64_t off = 0;
    int d = 0;
    for (std::int64_t i : ix) {
      if (i < 0 || i >= dims_[static_cast<std::size_t>(d)]) {
        throw ShapeError("tensor index out of range");
      }
      off = off * dims_[static_cast<std::size_t>(d)] + i;
      ++d;
    }
    return off;
  }

  /// Same buffer under new dims; element count must be unchanged.
  Tensor reshaped(std::vector<std::int64_t> new_dims) const {
    Tensor out(std::move(new_dims), data_);
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> v(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) v[i] = static_cast<U>(data_[i]);
    return Tensor<U>(dims_, std::move(v));
  }

  bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }

 private:
  static std::int64_t checked_count(const std::vector<std::int64_t>& dims) {
    std::int64_t n = 1;
    for (std::int64_t d : dims) {
      if (d < 0) throw ShapeError("negative tensor dimension");
      n *= d;
    }
    return n;
  }

  std::vector<std::int64_t> dims_;
  std::vector<T> data_;
};

template <typename T>
double max_abs(const Tensor<T>& t) {
  double m = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(static_cast<double>(t[i])));
  return m;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_dims(b)) throw ShapeError("max_abs_diff: dims differ");
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.size() != b.size()) throw ShapeError("dot: size mismatch");
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

inline std::string dims_to_string(const std::vector<std::int64_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

}  // namespace gunet
