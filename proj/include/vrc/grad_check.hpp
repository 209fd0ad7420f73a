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

#ifndef VRC_GRAD_CHECK_HPP_
#define VRC_GRAD_CHECK_HPP_

#include <functional>
#include <vector>

#include "vrc/autodiff.hpp"

namespace vrc {

// Central-difference gradient oracle. `fn` maps input tensors to a scalar Var
// graph; leaves are rebuilt per evaluation so perturbations take effect.
//
// Returns max over checked coordinates of |analytic - numeric| /
// (|analytic| + |numeric| + eps).
//
// `coords_per_input` <= 0 checks every coordinate; otherwise a deterministic
// sample of that many coordinates per input tensor is checked.
template <typename T>
double finite_difference_check(
    const std::function<Var<T>(const std::vector<Var<T>>&)>& fn,
    std::vector<Tensor<T>> inputs, double step, int64_t coords_per_input = -1,
    uint64_t sample_seed = 7, double eps = 1e-12) {
  auto make_leaves = [&](bool rg) {
    std::vector<Var<T>> leaves;
    leaves.reserve(inputs.size());
    for (auto& t : inputs) leaves.push_back(Var<T>::leaf(t, rg));
    return leaves;
  };

  std::vector<Var<T>> leaves = make_leaves(true);
  Var<T> out = fn(leaves);
  VRC_CHECK_MSG(out.value().size() == 1, "finite_difference_check: scalar output required");
  backward(out);
  std::vector<Tensor<T>> analytic;
  analytic.reserve(leaves.size());
  for (auto& l : leaves) analytic.push_back(l.grad());

  auto eval = [&]() -> double {
    std::vector<Var<T>> ls = make_leaves(false);
    return double(fn(ls).value()[0]);
  };

  Rng rng(sample_seed);
  double max_err = 0;
  for (size_t t = 0; t < inputs.size(); ++t) {
    const int64_t n = inputs[t].size();
    std::vector<int64_t> coords;
    if (coords_per_input <= 0 || coords_per_input >= n) {
      coords.resize(size_t(n));
      for (int64_t i = 0; i < n; ++i) coords[size_t(i)] = i;
    } else {
      for (int64_t i = 0; i < coords_per_input; ++i)
        coords.push_back(int64_t(rng.uniform_index(uint64_t(n))));
    }
    for (int64_t c : coords) {
      T saved = inputs[t][c];
      inputs[t][c] = saved + T(step);
      double fp = eval();
      inputs[t][c] = saved - T(step);
      double fm = eval();
      inputs[t][c] = saved;
      double numeric = (fp - fm) / (2.0 * step);
      double a = double(analytic[t][c]);
      double err = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + eps);
      if (err > max_err) max_err = err;
    }
  }
  return max_err;
}

}  // namespace vrc

#endif  // VRC_GRAD_CHECK_HPP_
