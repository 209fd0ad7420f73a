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

#ifndef VRC_GAUSSIAN_HPP_
#define VRC_GAUSSIAN_HPP_

#include "vrc/ops.hpp"

namespace vrc {

// Mass of N(mu, sigma^2) over [z - delta/2, z + delta/2], clamped below at
// p_floor. Pass p_floor = 0 for the raw integral.
template <typename T>
inline T gaussian_bin_prob(T z, T mu, T sigma, T delta, T p_floor = T(kProbFloor)) {
  T hi = normal_cdf_scalar((z - mu + delta / 2) / sigma);
  T lo = normal_cdf_scalar((z - mu - delta / 2) / sigma);
  T p = hi - lo;
  if (p < p_floor) p = p_floor;
  if (p > T(1)) p = T(1);
  return p;
}

namespace ops {

// Differentiable bin probability; gradients flow into z, mu, and sigma.
template <typename T>
Var<T> gaussian_bin_prob_var(const Var<T>& z, const Var<T>& mu, const Var<T>& sigma,
                             T delta, T p_floor = T(kProbFloor)) {
  Var<T> inv = reciprocal(sigma);
  Var<T> diff = sub(z, mu);
  Var<T> hi = normal_cdf(mul(add_scalar(diff, delta / 2), inv));
  Var<T> lo = normal_cdf(mul(add_scalar(diff, -delta / 2), inv));
  return clamp_min(sub(hi, lo), p_floor);
}

// Total code length in bits: sum of -log2 p over all elements.
template <typename T>
Var<T> bits_from_probs(const Var<T>& p) {
  return mul_scalar(sum_all(log_op(p)), T(-1.0 / M_LN2));
}

}  // namespace ops
}  // namespace vrc

#endif  // VRC_GAUSSIAN_HPP_
