#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "fader/errors.hpp"

namespace fader {

// Dense row-major tensor. Rank is dynamic; everything in this codebase uses
// rank 1 (vectors), 2 (H x W maps / patch grids), 3 (H x W x C images) or
// 4 (N x C x H x W network activations).
template <typename T>
class BasicTensor {
 public:
  BasicTensor() = default;

  explicit BasicTensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    v_.assign(static_cast<size_t>(count(shape_)), T(0));
  }

  BasicTensor(std::vector<int64_t> shape, T fill) : shape_(std::move(shape)) {
    v_.assign(static_cast<size_t>(count(shape_)), fill);
  }

  BasicTensor(std::vector<int64_t> shape, std::vector<T> values)
      : shape_(std::move(shape)), v_(std::move(values)) {
    if (static_cast<int64_t>(v_.size()) != count(shape_))
      throw ShapeError("tensor: value count does not match shape");
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const { return static_cast<int64_t>(v_.size()); }
  bool empty() const { return v_.empty(); }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }
  std::vector<T>& raw() { return v_; }
  const std::vector<T>& raw() const { return v_; }

  T& operator[](int64_t i) { return v_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return v_[static_cast<size_t>(i)]; }

  // Rank-checked accessors for the arities used in practice.
  T& at(int64_t i, int64_t j) { return v_[static_cast<size_t>(i * shape_[1] + j)]; }
  const T& at(int64_t i, int64_t j) const { return v_[static_cast<size_t>(i * shape_[1] + j)]; }

  T& at(int64_t i, int64_t j, int64_t k) {
    return v_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  const T& at(int64_t i, int64_t j, int64_t k) const {
    return v_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  T& at(int64_t i, int64_t j, int64_t k, int64_t l) {
    return v_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }
  const T& at(int64_t i, int64_t j, int64_t k, int64_t l) const {
    return v_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }

  void fill(T value) { std::fill(v_.begin(), v_.end(), value); }

  void reshape(std::vector<int64_t> shape) {
    if (count(shape) != numel()) throw ShapeError("tensor: reshape changes element count");
    shape_ = std::move(shape);
  }

  bool same_shape(const BasicTensor& o) const { return shape_ == o.shape_; }

  bool operator==(const BasicTensor& o) const { return shape_ == o.shape_ && v_ == o.v_; }

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    for (int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(v_[static_cast<size_t>(i)]);
    return out;
  }

  static int64_t count(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 0) throw ShapeError("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int64_t> shape_;
  std::vector<T> v_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

template <typename T>
T tensor_min(const BasicTensor<T>& t) {
  return *std::min_element(t.raw().begin(), t.raw().end());
}

template <typename T>
T tensor_max(const BasicTensor<T>& t) {
  return *std::max_element(t.raw().begin(), t.raw().end());
}

template <typename T>
double tensor_mean(const BasicTensor<T>& t) {
  double s = 0.0;
  for (int64_t i = 0; i < t.numel(); ++i) s += static_cast<double>(t[i]);
  return t.numel() ? s / static_cast<double>(t.numel()) : 0.0;
}

template <typename T>
bool tensor_all_finite(const BasicTensor<T>& t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(static_cast<double>(t[i]))) return false;
  return true;
}

std::string shape_string(const std::vector<int64_t>& shape);

}  // namespace fader
