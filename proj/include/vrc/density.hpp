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

#ifndef VRC_DENSITY_HPP_
#define VRC_DENSITY_HPP_

#include <array>
#include <vector>

#include "vrc/cond.hpp"
#include "vrc/ops.hpp"

namespace vrc {

// Learned univariate CDF per channel, built from K monotone stages
//   v <- softplus(H_k) v + b_k;  v <- v + tanh(a_k) * tanh(v)  (k < K-1)
// followed by a sigmoid. softplus(H) > 0 and |tanh(a)| < 1 keep the
// composition strictly increasing. Parameters are banked per lambda.
struct FactorizedDims {
  static constexpr int kStages = 4;
  static constexpr int kWidth = 3;

  static int stage_in(int k) { return k == 0 ? 1 : kWidth; }
  static int stage_out(int k) { return k == kStages - 1 ? 1 : kWidth; }
};

// Read-only view over the raw parameter banks:
//   h[k]: [L, C, out_k, in_k], b[k]: [L, C, out_k], a[k]: [L, C, out_k] (k<K-1)
template <typename T>
struct FactorizedParamsView {
  std::array<const Tensor<T>*, FactorizedDims::kStages> h{};
  std::array<const Tensor<T>*, FactorizedDims::kStages> b{};
  std::array<const Tensor<T>*, FactorizedDims::kStages - 1> a{};
  int64_t num_lambdas = 0;
  int64_t channels = 0;
};

// CDF of one channel's density at x. Coding-critical: single codegen so the
// encoder and decoder build identical tables.
template <typename T>
[[gnu::noinline]] T factorized_cdf_scalar(const FactorizedParamsView<T>& p,
                                          int64_t lambda, int64_t channel, T x) {
  constexpr int K = FactorizedDims::kStages;
  constexpr int W = FactorizedDims::kWidth;
  T v[W] = {x, T(0), T(0)};
  for (int k = 0; k < K; ++k) {
    const int in = FactorizedDims::stage_in(k);
    const int out = FactorizedDims::stage_out(k);
    const int64_t base_h = ((lambda * p.channels + channel) * out) * in;
    const int64_t base_b = (lambda * p.channels + channel) * out;
    T nv[W] = {T(0), T(0), T(0)};
    for (int j = 0; j < out; ++j) {
      T acc = (*p.b[k])[base_b + j];
      for (int i = 0; i < in; ++i)
        acc += softplus_scalar((*p.h[k])[base_h + j * in + i]) * v[i];
      nv[j] = acc;
    }
    if (k < K - 1) {
      for (int j = 0; j < out; ++j) {
        T g = std::tanh((*p.a[k])[base_b + j]);
        nv[j] += g * std::tanh(nv[j]);
      }
    }
    for (int j = 0; j < W; ++j) v[j] = j < out ? nv[j] : T(0);
  }
  return T(1) / (T(1) + std::exp(-v[0]));
}

// Bin mass over [w - delta/2, w + delta/2]; p_floor = 0 gives the raw mass.
template <typename T>
T factorized_bin_prob(const FactorizedParamsView<T>& p, int64_t lambda,
                      int64_t channel, T w, T delta, T p_floor = T(kProbFloor)) {
  T hi = factorized_cdf_scalar(p, lambda, channel, w + delta / 2);
  T lo = factorized_cdf_scalar(p, lambda, channel, w - delta / 2);
  T prob = hi - lo;
  if (prob < p_floor) prob = p_floor;
  if (prob > T(1)) prob = T(1);
  return prob;
}

// Smallest x with CDF(x) >= q, by bracketed bisection.
template <typename T>
double factorized_quantile(const FactorizedParamsView<T>& p, int64_t lambda,
                           int64_t channel, double q) {
  VRC_CHECK(q > 0 && q < 1);
  double lo = -1.0, hi = 1.0;
  for (int i = 0; i < 80 && double(factorized_cdf_scalar(p, lambda, channel, T(lo))) > q; ++i)
    lo *= 2.0;
  for (int i = 0; i < 80 && double(factorized_cdf_scalar(p, lambda, channel, T(hi))) < q; ++i)
    hi *= 2.0;
  for (int i = 0; i < 100; ++i) {
    double mid = 0.5 * (lo + hi);
    if (double(factorized_cdf_scalar(p, lambda, channel, T(mid))) < q)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

namespace ops {

template <typename T>
struct FactorizedVars {
  std::array<Var<T>, FactorizedDims::kStages> h;
  std::array<Var<T>, FactorizedDims::kStages> b;
  std::array<Var<T>, FactorizedDims::kStages - 1> a;
};

// CDF on the tape; x in density layout [C, 1, M], result [C, 1, M].
template <typename T>
Var<T> factorized_cdf_var(const FactorizedVars<T>& bank, int64_t lambda, Var<T> x) {
  constexpr int K = FactorizedDims::kStages;
  Var<T> v = std::move(x);
  for (int k = 0; k < K; ++k) {
    Var<T> hk = softplus(index_select0(bank.h[size_t(k)], lambda));
    v = grouped_linear(v, hk);
    v = grouped_bias(v, index_select0(bank.b[size_t(k)], lambda));
    if (k < K - 1) {
      Var<T> gate = tanh_op(index_select0(bank.a[size_t(k)], lambda));
      v = add(v, grouped_scale(tanh_op(v), gate));
    }
  }
  return sigmoid(v);
}

// Differentiable bin probabilities for a hyper-latent tensor [N,C,H,W].
template <typename T>
Var<T> factorized_bin_prob_var(const FactorizedVars<T>& bank, int64_t lambda,
                               const Var<T>& w, T delta, T p_floor = T(kProbFloor)) {
  Var<T> wd = to_density_layout(w);
  Var<T> hi = factorized_cdf_var(bank, lambda, add_scalar(wd, delta / 2));
  Var<T> lo = factorized_cdf_var(bank, lambda, add_scalar(wd, -delta / 2));
  return clamp_min(sub(hi, lo), p_floor);
}

}  // namespace ops
}  // namespace vrc

#endif  // VRC_DENSITY_HPP_
