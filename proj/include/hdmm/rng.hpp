//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstdint>

#include "hdmm/types.hpp"

namespace hdmm {

// Counter-based 64-bit generator (SplitMix64). The n-th draw of a stream is a
// pure function of (seed, stream, n), so runs are reproducible regardless of
// thread count or evaluation order.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Sub-seed derivation: all randomness flows from a single seed, with fixed
// stream tags (restart index, trial index, measurement stream).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ (0xa0761d6478bd642fULL * (stream + 1))) +
                    index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(derive_seed(seed, stream)) {}

  // Uniform in (0, 1); 53-bit mantissa, never exactly 0 or 1.
  double uniform() {
    const std::uint64_t bits = splitmix64(key_ + (++counter_));
    return static_cast<double>(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
  }

  // Laplace(0, scale) via inverse CDF: u ~ U(0,1), t = u - 1/2,
  // x = -scale * sgn(t) * log(1 - 2|t|).
  double laplace(double scale) {
    const double t = uniform() - 0.5;
    const double s = t < 0 ? -1.0 : 1.0;
    return -scale * s * std::log1p(-2.0 * std::abs(t));
  }

  Vector uniform_vector(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = uniform();
    return v;
  }

  Matrix uniform_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    // Row-major fill so the draw order is independent of storage layout.
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = uniform();
    return m;
  }

  Vector laplace_vector(Index n, double scale) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = laplace(scale);
    return v;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace hdmm
