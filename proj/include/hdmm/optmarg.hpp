//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <vector>

#include "hdmm/linop.hpp"
#include "hdmm/marginals_basis.hpp"
#include "hdmm/types.hpp"
#include "hdmm/workload.hpp"

namespace hdmm {

// Weighted-marginals strategy M(theta): theta has one nonnegative weight per
// attribute bitmask (bit i set <=> Identity on attribute i), and the full
// contingency mask keeps strictly positive weight so every workload is
// supported.
struct MarginalsStrategy {
  Vector theta;                // length 2^d
  std::vector<Index> domain;   // n_i per attribute

  Index dimensions() const { return static_cast<Index>(domain.size()); }
  double weight_total() const { return theta.sum(); }
  void validate() const;
};

// Weights v of G(v) = sum_a v_a C(a); symmetric by construction.
struct GramWeights {
  Vector v;
  std::vector<Index> domain;
};

// Workload term statistics folded into the marginals basis:
// m[a] = sum_j w_j^2 prod_i (trace_ij if bit i of a else sum_ij)
//      = sum_j w_j^2 tr[ C(a) (W^T W)_j ].
Vector marginal_workload_vector(const LogicalWorkload& w);
Vector marginal_workload_vector(
    const std::vector<std::vector<FactorStats>>& stats,
    const std::vector<double>& weights, Index d);

// The triangular matrix X(u) with G(u) G(v) = G(X(u) v); dense, for tests and
// small d.
Matrix xmat(const GramWeights& u);

// Weights of (M^T M)^{-1} = G(theta^2)^{-1}: triangular solve of
// X(u) v = e_full. Throws SupportError when the Gram is singular.
GramWeights gram_pinv_weights(const MarginalsStrategy& strategy);

// (sum theta)^2 ||W M(theta)^+||_F^2 evaluated in O(4^d); scale invariant in
// theta. Optionally fills the adjoint gradient.
double marg_objective(const MarginalsStrategy& strategy, const Vector& mvec,
                      Vector* grad = nullptr);

struct OptMargOptions {
  int max_iterations = 1000;
  double f_rel_tol = 1e-9;
  double g_inf_tol = 1e-6;
  int threads = 0;
  // Floor kept on the full-contingency weight relative to sum(theta). The
  // objective's infimum sits at theta_full -> 0 where the inverse weights
  // blow up like 1/theta_full^2 and the triangular solve loses every
  // significant digit, so the optimizer would otherwise chase rounding noise.
  // The floor costs O(floor^2) objective, far inside every tolerance here.
  double full_weight_floor = 1e-4;
};

struct OptMargResult {
  MarginalsStrategy strategy;  // renormalized to sum(theta) = 1
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

// OPT_M: quasi-Newton over theta >= 0 with the full-contingency floor, seeded
// restarts (parallel, deterministic reduction).
OptMargResult opt_marg(const LogicalWorkload& w, int restarts,
                       std::uint64_t seed, const OptMargOptions& options = {});

// M(theta) as a stack of weighted Identity/Total Kronecker products over the
// masks with positive weight; sensitivity is sum(theta).
LinOpPtr marg_strategy_matrix(const MarginalsStrategy& strategy);

}  // namespace hdmm
