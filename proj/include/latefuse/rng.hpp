// Copyright 2026 The latefuse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LATEFUSE_RNG_HPP
#define LATEFUSE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "latefuse/core.hpp"

// Seeded randomness for the whole library. std::* distributions are not
// portable across standard library implementations, so everything below is
// written out: SplitMix64 as the base generator plus the handful of
// transforms the pipeline needs. Same seed, same sequence, every platform.

namespace latefuse {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from (seed, a, b). Used for
/// counter-based per-sample streams: draws for sample i depend only on
/// (seed, i), never on how many draws other samples consumed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b = 0) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ (a + 0x9e3779b97f4a7c15ULL));
  h = mix64(h ^ (b + 0xbf58476d1ce4e5b9ULL));
  return h;
}

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53 random bits.
  double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1]; safe as a log argument.
  double u01_open() { return 1.0 - u01(); }

  /// Unbiased uniform integer in [0, n). Rejection sampling.
  std::uint64_t uniform_below(std::uint64_t n) {
    require(n > 0, "uniform_below: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  /// Standard normal via Box-Muller; two base draws per call, no cache.
  double normal() {
    double u1 = u01_open();
    double u2 = u01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Gamma(alpha, 1) via Marsaglia-Tsang.
  double gamma(double alpha) {
    require(alpha > 0.0, "gamma: alpha must be positive");
    if (alpha < 1.0) {
      // boost: Gamma(a) = Gamma(a+1) * U^(1/a)
      double u = u01_open();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = u01_open();
      double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Dirichlet draw: normalized vector of Gamma(alpha_k) draws.
  std::vector<double> dirichlet(const std::vector<double>& alphas) {
    std::vector<double> g(alphas.size());
    double total = 0.0;
    for (std::size_t k = 0; k < alphas.size(); ++k) {
      g[k] = gamma(alphas[k]);
      total += g[k];
    }
    require(total > 0.0, "dirichlet: degenerate draw");
    for (double& v : g) v /= total;
    return g;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace latefuse

#endif  // LATEFUSE_RNG_HPP
