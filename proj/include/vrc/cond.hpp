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

#ifndef VRC_COND_HPP_
#define VRC_COND_HPP_

#include <vector>

#include "vrc/ops.hpp"

namespace vrc {

struct LambdaGrid {
  std::vector<double> values;

  LambdaGrid() = default;
  explicit LambdaGrid(std::vector<double> v) : values(std::move(v)) { validate(); }

  // Default 5-point grid {10^-1.5 .. 10^-3.5}.
  static LambdaGrid paper_default() {
    return LambdaGrid({std::pow(10.0, -1.5), std::pow(10.0, -2.0), std::pow(10.0, -2.5),
                       std::pow(10.0, -3.0), std::pow(10.0, -3.5)});
  }

  // Two-point desk-scale grid used by the CI-sized training runs.
  static LambdaGrid desk_default() { return LambdaGrid({1e-2, 1e-3}); }

  size_t size() const { return values.size(); }
  double value(int64_t index) const {
    VRC_CHECK_MSG(index >= 0 && size_t(index) < values.size(),
                  "lambda index out of range");
    return values[size_t(index)];
  }

  void validate() const {
    VRC_CHECK_MSG(!values.empty(), "lambda grid must be non-empty");
    for (size_t i = 0; i < values.size(); ++i) {
      VRC_CHECK_MSG(values[i] > 0, "lambda values must be positive");
      if (i > 0)
        VRC_CHECK_MSG(values[i] < values[i - 1],
                      "lambda grid must be strictly decreasing");
    }
  }
};

// The two rate knobs. delta never conditions network layers; it only enters
// quantization and the entropy-model integration width.
struct ConditioningContext {
  int64_t lambda_index = 0;
  double delta = 1.0;

  void validate(const LambdaGrid& grid, double delta_min = 0.0,
                double delta_max = 1e30) const {
    VRC_CHECK_MSG(lambda_index >= 0 && size_t(lambda_index) < grid.size(),
                  "lambda index out of range");
    VRC_CHECK_MSG(delta > 0, "bin size must be positive");
    VRC_CHECK_MSG(delta >= delta_min && delta <= delta_max,
                  "bin size outside configured range");
  }
};

template <typename T>
std::vector<T> onehot_lambda(const ConditioningContext& ctx, const LambdaGrid& grid) {
  ctx.validate(grid);
  std::vector<T> v(grid.size(), T(0));
  v[size_t(ctx.lambda_index)] = T(1);
  return v;
}

// Per-channel scale/bias from the per-lambda banks: s_j = softplus(u_j . onehot),
// b_j = v_j . onehot. Plain-tensor flavor shared by the serial coding path.
template <typename T>
void cond_scale_bias_values(const Tensor<T>& u_bank, const Tensor<T>& v_bank,
                            int64_t lambda_index, std::vector<T>* s, std::vector<T>* b) {
  VRC_CHECK(u_bank.rank() == 2 && v_bank.rank() == 2);
  VRC_CHECK(u_bank.same_shape(v_bank));
  VRC_CHECK_MSG(lambda_index >= 0 && lambda_index < u_bank.dim(0),
                "lambda index out of range");
  int64_t C = u_bank.dim(1);
  s->resize(size_t(C));
  b->resize(size_t(C));
  for (int64_t c = 0; c < C; ++c) {
    (*s)[size_t(c)] = softplus_scalar(u_bank[lambda_index * C + c]);
    (*b)[size_t(c)] = v_bank[lambda_index * C + c];
  }
}

namespace ops {

// (s, b) on the tape: row select from the banks, softplus on the scale row.
template <typename T>
std::pair<Var<T>, Var<T>> cond_scale_bias(const Var<T>& u_bank, const Var<T>& v_bank,
                                          int64_t lambda_index) {
  Var<T> s = softplus(index_select0(u_bank, lambda_index));
  Var<T> b = index_select0(v_bank, lambda_index);
  return {s, b};
}

// Conditional convolution: Y_j = s_j(lambda) * (sum_i X_i * W_ij) + b_j(lambda).
// Supports the plain, transposed, and masked flavors.
template <typename T>
Var<T> cond_conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& u_bank,
                   const Var<T>& v_bank, int64_t lambda_index, int64_t stride,
                   int64_t pad, bool transposed = false,
                   MaskType mask = MaskType::kNone) {
  Var<T> y;
  if (transposed) {
    VRC_CHECK_MSG(mask == MaskType::kNone, "masked transposed conv unsupported");
    y = transposed_conv2d<T>(x, kernel, std::nullopt, stride, pad);
  } else {
    y = conv2d<T>(x, kernel, std::nullopt, stride, pad, mask);
  }
  auto [s, b] = cond_scale_bias<T>(u_bank, v_bank, lambda_index);
  return channel_scale_bias(y, s, b);
}

}  // namespace ops
}  // namespace vrc

#endif  // VRC_COND_HPP_
