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

#ifndef VRC_CDF_HPP_
#define VRC_CDF_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "vrc/base.hpp"

namespace vrc {

constexpr uint32_t kCdfTotal = 1u << 16;
constexpr int64_t kMaxAlphabet = 1 << 15;

// Integer-quantized cumulative distribution over a contiguous symbol
// alphabet; the contract between the entropy model and the range coder.
// When has_escape is set, the last index codes out-of-alphabet symbols.
struct CdfTable {
  int32_t symbol_offset = 0;
  std::vector<uint32_t> cum;  // size n+1, cum[0] = 0, cum[n] = 2^16, strict
  bool has_escape = false;

  int64_t num_symbols() const { return int64_t(cum.size()) - 1; }
  uint32_t freq(int64_t index) const { return cum[size_t(index) + 1] - cum[size_t(index)]; }
  uint32_t cum_at(int64_t index) const { return cum[size_t(index)]; }

  int64_t num_value_symbols() const { return num_symbols() - (has_escape ? 1 : 0); }
  int64_t escape_index() const { return num_symbols() - 1; }

  // Table index for integer symbol k; the escape index when out of range.
  int64_t index_for(int32_t k) const {
    int64_t i = int64_t(k) - symbol_offset;
    if (i >= 0 && i < num_value_symbols()) return i;
    VRC_CHECK_MSG(has_escape, "symbol outside table alphabet");
    return escape_index();
  }

  int32_t value_for(int64_t index) const { return int32_t(symbol_offset + index); }

  void validate() const {
    VRC_CHECK_MSG(cum.size() >= 2, "cdf table too small");
    VRC_CHECK_MSG(cum.front() == 0 && cum.back() == kCdfTotal, "cdf endpoints");
    for (size_t i = 1; i < cum.size(); ++i)
      VRC_CHECK_MSG(cum[i] > cum[i - 1], "cdf not strictly increasing");
  }
};

// Quantizes bin probabilities to 16-bit cumulative frequencies. Every symbol
// keeps at least one count; the rounding remainder lands on the
// largest-probability symbols (deterministic, lowest index on ties).
inline CdfTable build_cdf_table(const std::vector<double>& probs,
                                int32_t symbol_offset = 0, bool has_escape = false) {
  const int64_t n = int64_t(probs.size());
  VRC_CHECK_MSG(n >= 1, "cdf: empty alphabet");
  VRC_CHECK_MSG(n <= kMaxAlphabet, "cdf: alphabet too large for 16-bit precision");

  std::vector<int64_t> counts(size_t(n), 0);
  int64_t sum = 0;
  for (int64_t i = 0; i < n; ++i) {
    VRC_CHECK_MSG(probs[size_t(i)] >= 0, "cdf: negative probability");
    int64_t c = int64_t(std::llround(probs[size_t(i)] * double(kCdfTotal)));
    if (c < 1) c = 1;
    counts[size_t(i)] = c;
    sum += c;
  }

  while (sum != int64_t(kCdfTotal)) {
    // Index with the largest count (for deficits, the best home for extra
    // mass; for excess, the safest place to take it from).
    int64_t best = 0;
    for (int64_t i = 1; i < n; ++i)
      if (counts[size_t(i)] > counts[size_t(best)]) best = i;
    if (sum < int64_t(kCdfTotal)) {
      counts[size_t(best)] += int64_t(kCdfTotal) - sum;
      sum = kCdfTotal;
    } else {
      int64_t take = std::min(sum - int64_t(kCdfTotal), counts[size_t(best)] - 1);
      VRC_CHECK_MSG(take > 0, "cdf: cannot renormalize");
      counts[size_t(best)] -= take;
      sum -= take;
    }
  }

  CdfTable t;
  t.symbol_offset = symbol_offset;
  t.has_escape = has_escape;
  t.cum.resize(size_t(n) + 1);
  t.cum[0] = 0;
  for (int64_t i = 0; i < n; ++i)
    t.cum[size_t(i) + 1] = t.cum[size_t(i)] + uint32_t(counts[size_t(i)]);
  t.validate();
  return t;
}

}  // namespace vrc

#endif  // VRC_CDF_HPP_
