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

#ifndef VRC_OPTIMIZER_HPP_
#define VRC_OPTIMIZER_HPP_

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "vrc/tensor.hpp"

namespace vrc {

struct OptimizerConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // (step, learning_rate) drops; the last entry with step <= t applies.
  std::vector<std::pair<int64_t, double>> schedule;

  void validate() const {
    VRC_CHECK_MSG(learning_rate > 0, "learning rate must be positive");
    VRC_CHECK_MSG(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1,
                  "betas must be in (0,1)");
    VRC_CHECK_MSG(epsilon > 0, "epsilon must be positive");
    for (size_t i = 0; i < schedule.size(); ++i) {
      VRC_CHECK_MSG(schedule[i].second > 0, "schedule rates must be positive");
      if (i > 0)
        VRC_CHECK_MSG(schedule[i].first > schedule[i - 1].first,
                      "schedule steps must be strictly increasing");
    }
  }

  double rate_at(int64_t step) const {
    double lr = learning_rate;
    for (const auto& [s, r] : schedule)
      if (step >= s) lr = r;
    return lr;
  }
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;  // filled by the caller before adam_step
  Tensor<T> adam_m;
  Tensor<T> adam_v;
  int64_t adam_step_count = 0;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.shape()),
        adam_m(value.shape()),
        adam_v(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
};

// Bias-corrected Adam over a parameter set. A non-finite gradient aborts the
// whole step before any parameter is touched.
template <typename T>
void adam_step(std::vector<Parameter<T>>& params, const OptimizerConfig& cfg) {
  cfg.validate();
  for (const auto& p : params) {
    VRC_CHECK_MSG(p.grad.size() == p.value.size(), "adam_step: gradient missing");
    VRC_CHECK_MSG(p.grad.all_finite(),
                  "adam_step: non-finite gradient for parameter '" + p.name + "'");
  }
  for (auto& p : params) {
    p.adam_step_count += 1;
    const double t = double(p.adam_step_count);
    const double lr = cfg.rate_at(p.adam_step_count - 1);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    T* v = p.value.data();
    T* g = p.grad.data();
    T* m1 = p.adam_m.data();
    T* m2 = p.adam_v.data();
    for (int64_t i = 0; i < p.value.size(); ++i) {
      double gi = double(g[i]);
      double m = cfg.beta1 * double(m1[i]) + (1.0 - cfg.beta1) * gi;
      double s = cfg.beta2 * double(m2[i]) + (1.0 - cfg.beta2) * gi * gi;
      m1[i] = T(m);
      m2[i] = T(s);
      double mh = m / bc1;
      double sh = s / bc2;
      v[i] = T(double(v[i]) - lr * mh / (std::sqrt(sh) + cfg.epsilon));
    }
  }
}

}  // namespace vrc

#endif  // VRC_OPTIMIZER_HPP_
