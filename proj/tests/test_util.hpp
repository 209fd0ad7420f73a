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

#ifndef VRC_TESTS_TEST_UTIL_HPP_
#define VRC_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace vrc_test {

// One-sample Kolmogorov-Smirnov statistic against a reference CDF.
inline double ks_statistic(std::vector<double> samples,
                           const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = double(samples.size());
  double d = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - double(i) / n));
    d = std::max(d, std::abs(double(i + 1) / n - f));
  }
  return d;
}

// Asymptotic KS p-value (Kolmogorov distribution complement).
inline double ks_p_value(double d, size_t n) {
  double sn = std::sqrt(double(n));
  double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double sum = 0;
  for (int k = 1; k <= 100; ++k) {
    double term = 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::min(1.0, std::max(0.0, sum));
}

inline double ks_test_p(std::vector<double> samples,
                        const std::function<double(double)>& cdf) {
  size_t n = samples.size();
  return ks_p_value(ks_statistic(std::move(samples), cdf), n);
}

}  // namespace vrc_test

#endif  // VRC_TESTS_TEST_UTIL_HPP_
