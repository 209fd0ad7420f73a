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

#ifndef VRC_BASE_HPP_
#define VRC_BASE_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace vrc {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void check_failed(const char* expr, const char* file, int line,
                         const std::string& msg) {
  std::ostringstream os;
  os << "check failed: " << expr << " (" << file << ":" << line << ")";
  if (!msg.empty()) os << ": " << msg;
  throw Error(os.str());
}
}  // namespace detail

#define VRC_CHECK(cond)                                             \
  do {                                                              \
    if (!(cond)) ::vrc::detail::check_failed(#cond, __FILE__, __LINE__, ""); \
  } while (0)

#define VRC_CHECK_MSG(cond, msg)                                    \
  do {                                                              \
    if (!(cond)) {                                                  \
      std::ostringstream vrc_os_;                                   \
      vrc_os_ << msg;                                               \
      ::vrc::detail::check_failed(#cond, __FILE__, __LINE__, vrc_os_.str()); \
    }                                                               \
  } while (0)

// Deterministic 64-bit mixer; used to derive independent RNG streams from
// (seed, step, index) tuples so parallel data loading cannot change results.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0,
                         uint64_t c = 0) {
  uint64_t x = splitmix64(seed ^ 0xA24BAED4963EE407ull);
  x = splitmix64(x ^ splitmix64(a));
  x = splitmix64(x ^ splitmix64(b ^ 0x9FB21C651E98DF25ull));
  x = splitmix64(x ^ splitmix64(c ^ 0x3C79AC492BA7B653ull));
  return x;
}

// Minimal deterministic RNG. std::uniform_*_distribution is implementation
// defined; this keeps draws reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(splitmix64(seed ^ 0x853C49E6748FEA9Bull)) {}

  uint64_t next_u64() {
    state_ = splitmix64(state_ + 0x9E3779B97F4A7C15ull);
    return state_;
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) {
    VRC_CHECK(n > 0);
    return next_u64() % n;
  }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

 private:
  uint64_t state_;
};

// Shared scalar softplus: log(1 + e^x), stable for large |x|. The coding path
// and the tape op must produce bit-identical values, so both call this.
template <typename T>
inline T softplus_scalar(T x) {
  if (x > T(30)) return x;
  if (x < T(-30)) return std::exp(x);
  return std::log1p(std::exp(x));
}

// Inverse of softplus for parameter initialization.
inline double softplus_inverse(double y) { return std::log(std::expm1(y)); }

// Standard normal CDF via erfc (accurate in both tails).
template <typename T>
inline T normal_cdf_scalar(T x) {
  return T(0.5) * std::erfc(-x * T(M_SQRT1_2));
}

// Standard normal density.
template <typename T>
inline T normal_pdf_scalar(T x) {
  return std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
}

constexpr double kProbFloor = 1.0 / 65536.0;  // 2^-16, aligned with coder precision
constexpr double kSigmaFloor = 1e-3;
constexpr double kGdnFloor = 0x1p-10;  // reparameterization floor raw^2 + 2^-10

}  // namespace vrc

#endif  // VRC_BASE_HPP_
