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

#ifndef VRC_GDN_HPP_
#define VRC_GDN_HPP_

#include "vrc/ops.hpp"

namespace vrc {
namespace ops {

// Generalized divisive normalization over the channel dimension:
//   y_j = x_j / sqrt(beta_j + sum_i gamma_ji x_i^2)         (forward)
//   y_j = x_j * sqrt(beta_j + sum_i gamma_ji x_i^2)         (inverse, IGDN)
// Positivity holds by construction: effective = raw^2 + 2^-10 for both beta
// (per channel) and gamma (per channel pair).
template <typename T>
Var<T> gdn(const Var<T>& x, const Var<T>& beta_raw, const Var<T>& gamma_raw,
           bool inverse) {
  VRC_CHECK_MSG(x.value().rank() == 4, "gdn: input must be 4-D");
  const int64_t C = x.value().dim(1);
  VRC_CHECK_MSG(beta_raw.value().size() == C, "gdn: beta size mismatch");
  VRC_CHECK_MSG(gamma_raw.value().size() == C * C, "gdn: gamma size mismatch");

  Var<T> beta_eff = add_scalar(square(beta_raw), T(kGdnFloor));
  Var<T> gamma_eff = add_scalar(square(gamma_raw), T(kGdnFloor));
  Var<T> gamma_kernel = reshape(gamma_eff, {C, C, 1, 1});
  Var<T> den = conv2d<T>(square(x), gamma_kernel, std::nullopt, 1, 0);
  Var<T> ones = Var<T>::leaf(Tensor<T>::full({C}, T(1)), false);
  den = channel_scale_bias(den, ones, beta_eff);
  Var<T> root = sqrt_op(den);
  return inverse ? mul(x, root) : mul(x, reciprocal(root));
}

// Raw value giving an effective GDN coefficient `eff` under the
// squared-plus-floor reparameterization.
template <typename T>
T gdn_raw_from_effective(T eff) {
  VRC_CHECK_MSG(double(eff) >= kGdnFloor, "effective value below reparameterization floor");
  return T(std::sqrt(double(eff) - kGdnFloor));
}

}  // namespace ops
}  // namespace vrc

#endif  // VRC_GDN_HPP_
