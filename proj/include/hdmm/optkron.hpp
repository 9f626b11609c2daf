//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <vector>

#include "hdmm/opt0.hpp"
#include "hdmm/workload.hpp"

namespace hdmm {

// Product strategy A_1 (x) ... (x) A_d with p-Identity factors; overall
// sensitivity is the product of factor sensitivities, i.e. exactly 1.
struct KronStrategy {
  std::vector<PIdentityParams> factors;

  LinOpPtr to_linop() const;  // Kron of A(Theta_i)
};

// Union of budget-weighted product strategies; stacked sensitivity 1.
struct UnionStrategy {
  struct Term {
    double budget_share = 1.0;  // in (0, 1], shares sum to 1
    KronStrategy strategy;
  };
  std::vector<Term> terms;

  LinOpPtr to_linop() const;  // Stack of share-scaled products
};

struct OptKronOptions {
  Opt0Options opt0;
  int max_sweeps = 50;
  double sweep_rel_tol = 1e-4;
  int threads = 0;
};

struct OptKronResult {
  KronStrategy strategy;
  double error = 0.0;  // || W A^+ ||_F^2
  bool converged = false;
  std::vector<double> sweep_trace;  // union error after each sweep (best restart)
};

// Dense per-attribute Grams (W_i^T W_i)^{(j)}, precomputed once per workload.
std::vector<std::vector<Matrix>> factor_grams(const LogicalWorkload& w);

// || W A^+ ||_F^2 = sum_j w_j^2 prod_i tr[(A_i^T A_i)^{-1} (W_i^T W_i)^{(j)}].
double union_error(const LogicalWorkload& w, const KronStrategy& strat);
double union_error(const std::vector<std::vector<Matrix>>& grams,
                   const std::vector<double>& weights,
                   const KronStrategy& strat);

// Surrogate Gram for attribute `attr`: sum_j c_j^2 (W_i^T W_i)^{(j)} with
// c_j = w_j prod_{i' != i} ||W_{i'}^{(j)} A_{i'}^+||_F, so optimizing the
// factor on it optimizes the true union objective.
Matrix surrogate_gram(const std::vector<std::vector<Matrix>>& grams,
                      const std::vector<double>& weights,
                      const KronStrategy& strat, Index attr);
Matrix surrogate_gram(const LogicalWorkload& w, const KronStrategy& strat,
                      Index attr);

// OPT(x): block coordinate descent over per-attribute sub-strategies, cycling
// until the union error stalls; best over seeded restarts.
OptKronResult opt_kron(const LogicalWorkload& w, const std::vector<Index>& p,
                       int restarts, std::uint64_t seed,
                       const OptKronOptions& options = {});

// Support-pattern partition of terms into at most two groups, balancing the
// per-term Frobenius mass; deterministic.
std::vector<std::vector<Index>> default_partition(const LogicalWorkload& w);

struct OptPlusResult {
  UnionStrategy strategy;
  double error = 0.0;  // sum_g (1/share_g^2) || W_g A_g^+ ||_F^2
  bool converged = false;
};

// OPT(+): one OPT(x) per term group, uniform budget shares.
OptPlusResult opt_plus(const LogicalWorkload& w,
                       const std::vector<std::vector<Index>>& partition,
                       const std::vector<Index>& p, int restarts,
                       std::uint64_t seed, const OptKronOptions& options = {});

// Default p per attribute: 1 when every block on the attribute is Total or
// Identity, else ceil(n_i / 16), clamped to [1, n_i].
std::vector<Index> default_p(const LogicalWorkload& w);

}  // namespace hdmm
