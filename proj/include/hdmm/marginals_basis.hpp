//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <vector>

#include "hdmm/types.hpp"

namespace hdmm {

// Algebra of marginal Gram matrices. A bitmask a over d attributes denotes
// the N x N matrix C(a) = F_0 (x) ... (x) F_{d-1} with F_i = I(n_i) when bit i
// of a is set and F_i = ones(n_i, n_i) otherwise (bit i <=> attribute i,
// attribute 0 = leftmost Kronecker factor = slowest-varying index).
// Products obey C(a) C(b) = c(a|b) C(a&b) with the scalar c defined below,
// so sums G(v) = sum_a v_a C(a) form an algebra with O(4^d) arithmetic.
//
// The triangular solves below run in extended precision: with a tiny
// full-contingency weight the inverse weights scale like 1/theta_full^2 and
// cancel almost completely against each other, so double accumulation loses
// the objective entirely near the support floor.

using MaskIndex = std::uint32_t;

// c(k) = prod_i [ n_i if bit i of k is clear, else 1 ].
inline double c_scalar(MaskIndex mask, const std::vector<Index>& domain) {
  double p = 1.0;
  for (std::size_t i = 0; i < domain.size(); ++i)
    if (!((mask >> i) & 1u)) p *= static_cast<double>(domain[i]);
  return p;
}

// Table of c(k) for all 2^d masks.
inline Vector c_table(const std::vector<Index>& domain) {
  const MaskIndex count = MaskIndex{1} << domain.size();
  Vector c(count);
  for (MaskIndex k = 0; k < count; ++k) c[k] = c_scalar(k, domain);
  return c;
}

// Weight vector of G(u) G(v): w[a & b] += u_a v_b c(a | b).
inline Vector g_multiply_weights(const Vector& u, const Vector& v,
                                 const Vector& c) {
  const MaskIndex count = static_cast<MaskIndex>(u.size());
  std::vector<long double> w(count, 0.0L);
  for (MaskIndex a = 0; a < count; ++a) {
    if (u[a] == 0.0) continue;
    const long double ua = u[a];
    for (MaskIndex b = 0; b < count; ++b)
      if (v[b] != 0.0) w[a & b] += ua * static_cast<long double>(v[b]) * c[a | b];
  }
  Vector out(count);
  for (MaskIndex k = 0; k < count; ++k) out[k] = static_cast<double>(w[k]);
  return out;
}

// Diagonal of the triangular system matrix X(u): diag[k] = sum_{a >= k} u_a c(a)
// (superset sum, computed by a zeta transform).
inline std::vector<long double> x_diagonal(const Vector& u, const Vector& c,
                                           int d) {
  const MaskIndex count = static_cast<MaskIndex>(u.size());
  std::vector<long double> diag(count);
  for (MaskIndex k = 0; k < count; ++k)
    diag[k] = static_cast<long double>(u[k]) * c[k];
  for (int i = 0; i < d; ++i)
    for (MaskIndex k = 0; k < count; ++k)
      if (!((k >> i) & 1u)) diag[k] += diag[k | (MaskIndex{1} << i)];
  return diag;
}

// Solves X(u) v = z where X(u)[k,b] = sum_{a : a&b = k} u_a c(a|b); X is
// triangular under the subset order (nonzeros only at k subset of b), so back
// substitution runs from the full mask downward. A vanishing pivot means
// G(u) is singular on the corresponding marginal subspace.
inline std::vector<long double> solve_x_system(const Vector& u,
                                               const Vector& z, const Vector& c,
                                               int d) {
  const MaskIndex count = static_cast<MaskIndex>(u.size());
  const std::vector<long double> diag = x_diagonal(u, c, d);
  std::vector<long double> r(count);
  for (MaskIndex k = 0; k < count; ++k) r[k] = z[k];
  std::vector<long double> v(count);
  for (MaskIndex kk = count; kk-- > 0;) {
    const MaskIndex k = kk;
    if (diag[k] <= 0.0L) {
      if (r[k] == 0.0L) {
        v[k] = 0.0L;
        continue;
      }
      throw SupportError("singular marginals Gram: unsupported weight mask");
    }
    v[k] = r[k] / diag[k];
    if (v[k] == 0.0L) continue;
    for (MaskIndex a = 0; a < count; ++a) {
      const MaskIndex low = a & k;
      if (low != k && u[a] != 0.0)
        r[low] -= static_cast<long double>(u[a]) * c[a | k] * v[k];
    }
  }
  return v;
}

// Solves X(u)^T lambda = g by forward substitution over increasing masks.
inline std::vector<long double> solve_xt_system(const Vector& u,
                                                const Vector& g, const Vector& c,
                                                int d) {
  const MaskIndex count = static_cast<MaskIndex>(u.size());
  const std::vector<long double> diag = x_diagonal(u, c, d);
  std::vector<long double> lambda(count);
  for (MaskIndex b = 0; b < count; ++b) {
    long double acc = g[b];
    for (MaskIndex a = 0; a < count; ++a) {
      const MaskIndex low = a & b;
      if (low != b && u[a] != 0.0)
        acc -= static_cast<long double>(u[a]) * c[a | b] * lambda[low];
    }
    if (diag[b] == 0.0L) {
      if (acc == 0.0L) {
        lambda[b] = 0.0L;
        continue;
      }
      throw SupportError("singular marginals Gram: unsupported weight mask");
    }
    lambda[b] = acc / diag[b];
  }
  return lambda;
}

inline Vector to_vector(const std::vector<long double>& x) {
  Vector out(static_cast<Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) out[static_cast<Index>(i)] =
      static_cast<double>(x[i]);
  return out;
}

// Weights v with G(v) = G(u)^{-1}: solve X(u) v = e_full (G(e_full) = I).
inline Vector g_inverse_weights(const Vector& u, const std::vector<Index>& domain) {
  const int d = static_cast<int>(domain.size());
  const Vector c = c_table(domain);
  Vector z = Vector::Zero(u.size());
  z[u.size() - 1] = 1.0;
  return to_vector(solve_x_system(u, z, c, d));
}

}  // namespace hdmm
