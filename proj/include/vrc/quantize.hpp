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

#ifndef VRC_QUANTIZE_HPP_
#define VRC_QUANTIZE_HPP_

#include <cmath>
#include <utility>

#include "vrc/autodiff.hpp"
#include "vrc/tensor.hpp"

namespace vrc {

// Nearest-multiple rounding, ties away from zero. Tie handling is pinned:
// encoder, decoder, and training must agree or bitstreams corrupt.
template <typename T>
inline T round_delta_scalar(T x, T delta) {
  return delta * T(std::round(double(x) / double(delta)));
}

template <typename T>
inline int32_t quantize_symbol(T x, T delta) {
  return int32_t(std::lround(double(x) / double(delta)));
}

template <typename T>
Tensor<T> round_delta(const Tensor<T>& x, T delta) {
  VRC_CHECK_MSG(delta > T(0), "round_delta: bin size must be positive");
  Tensor<T> out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = round_delta_scalar(x[i], delta);
  return out;
}

// Dithered quantization: one scalar u ~ U[-delta/2, delta/2] shared by every
// element, z = round_delta(x + u) - u. The backward pass is the identity.
template <typename T>
std::pair<Tensor<T>, T> universal_quantize(const Tensor<T>& x, T delta, Rng& rng) {
  VRC_CHECK_MSG(delta > T(0), "universal_quantize: bin size must be positive");
  T u = T(rng.uniform(-double(delta) / 2, double(delta) / 2));
  Tensor<T> z(x.shape());
  for (int64_t i = 0; i < x.size(); ++i)
    z[i] = round_delta_scalar(x[i] + u, delta) - u;
  return {std::move(z), u};
}

namespace ops {

// Tape op with a straight-through backward (identity Jacobian by contract).
template <typename T>
Var<T> universal_quantize_st(const Var<T>& x, T delta, T u) {
  VRC_CHECK_MSG(delta > T(0), "universal_quantize_st: bin size must be positive");
  Tensor<T> z(x.value().shape());
  const Tensor<T>& xv = x.value();
  for (int64_t i = 0; i < xv.size(); ++i)
    z[i] = round_delta_scalar(xv[i] + u, delta) - u;
  auto xn = x.node();
  return make_op<T>(std::move(z), {x}, [xn](Node<T>& self) {
    if (xn->requires_grad) detail::accumulate(xn->ensure_grad(), self.grad);
  });
}

}  // namespace ops

struct BinMixingPolicy {
  double exponent_low = -1.0;
  double exponent_high = 1.0;

  void validate() const {
    VRC_CHECK_MSG(exponent_low <= exponent_high, "bin mixing: low > high");
  }
};

// Delta = 2^b, b ~ U[low, high].
inline double sample_bin_size(const BinMixingPolicy& policy, Rng& rng) {
  policy.validate();
  double b = rng.uniform(policy.exponent_low, policy.exponent_high);
  return std::exp2(b);
}

}  // namespace vrc

#endif  // VRC_QUANTIZE_HPP_
