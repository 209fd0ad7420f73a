// Copyright (c) the VRC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VRC_TENSOR_HPP_
#define VRC_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "vrc/base.hpp"

namespace vrc {

// Dense row-major tensor. Rank is dynamic; 4-D (N, C, H, W) carries images and
// feature maps, 3-D (C, K, M) carries the factorized-density layout.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape)
      : shape_(std::move(shape)), v_(checked_size(shape_), T(0)) {}
  Tensor(std::vector<int64_t> shape, T fill)
      : shape_(std::move(shape)), v_(checked_size(shape_), fill) {}

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, T v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(T v) { return Tensor({1}, v); }

  static Tensor from_values(std::vector<int64_t> shape, std::vector<T> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    VRC_CHECK_MSG(int64_t(values.size()) == checked_size(t.shape_),
                  "value count does not match shape");
    t.v_ = std::move(values);
    return t;
  }

  int64_t size() const { return int64_t(v_.size()); }
  int rank() const { return int(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(size_t(i)); }
  const std::vector<int64_t>& shape() const { return shape_; }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }
  T& operator[](int64_t i) { return v_[size_t(i)]; }
  const T& operator[](int64_t i) const { return v_[size_t(i)]; }

  // 4-D accessors (N, C, H, W).
  T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return v_[size_t(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return v_[size_t(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(T v) { std::fill(v_.begin(), v_.end(), v); }

  bool all_finite() const {
    for (const T& x : v_) {
      if (!std::isfinite(double(x))) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < size(); ++i) out[i] = U(v_[size_t(i)]);
    return out;
  }

  // Reinterpret as a different shape with the same element count.
  Tensor reshaped(std::vector<int64_t> shape) const {
    VRC_CHECK_MSG(checked_size(shape) == size(), "reshape element count mismatch");
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  static int64_t checked_size(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      VRC_CHECK_MSG(d >= 0, "negative extent");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int64_t> shape_;
  std::vector<T> v_;
};

template <typename T>
Tensor<T> random_uniform(std::vector<int64_t> shape, Rng& rng, T lo = T(0), T hi = T(1)) {
  Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = T(rng.uniform(double(lo), double(hi)));
  return t;
}

template <typename T>
Tensor<T> random_normal(std::vector<int64_t> shape, Rng& rng, T mean = T(0), T stddev = T(1)) {
  Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = T(double(mean) + double(stddev) * rng.normal());
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  VRC_CHECK(a.same_shape(b));
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b, double eps = 1e-12) {
  VRC_CHECK(a.same_shape(b));
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i) {
    double x = double(a[i]), y = double(b[i]);
    m = std::max(m, std::abs(x - y) / (std::abs(x) + std::abs(y) + eps));
  }
  return m;
}

}  // namespace vrc

#endif  // VRC_TENSOR_HPP_
