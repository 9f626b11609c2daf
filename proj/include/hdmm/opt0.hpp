//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <vector>

#include "hdmm/lbfgsb.hpp"
#include "hdmm/linop.hpp"
#include "hdmm/types.hpp"

namespace hdmm {

// Nonnegative p x n parameter matrix of a p-Identity strategy A(Theta).
struct PIdentityParams {
  Matrix theta;

  Index p() const { return theta.rows(); }
  Index n() const { return theta.cols(); }
};

struct OptResult {
  PIdentityParams params;
  double objective = 0.0;  // tr[(A^T A)^{-1} W^T W]
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // accepted objective values of the best restart
};

struct Opt0Options {
  int max_iterations = 1000;
  double f_rel_tol = 1e-9;
  double g_inf_tol = 1e-6;
  int threads = 0;  // <= 0: hardware concurrency
  bool record_trace = false;
};

// A(Theta) as an implicit operator (rejects negative entries).
LinOpPtr build_pidentity(const Matrix& theta);

// C(A(Theta)) = tr[(A^T A)^{-1} W^T W], evaluated through the Woodbury
// identity in O(p n^2); optionally fills the gradient dC/dTheta (chain rule
// through the column normalizer D).
double pid_objective(const Matrix& theta, const Matrix& gram_w,
                     Matrix* grad = nullptr);

// Quasi-Newton descent from a given starting point (warm starts for the
// block-coordinate optimizers).
OptResult opt0_minimize(const Matrix& theta0, const Matrix& gram_w,
                        const Opt0Options& options = {});

// Strategy selection for an explicit workload Gram: `restarts` seeded random
// initializations Theta_0 ~ U[0,1)^{p x n}, best objective wins. Restarts are
// independent and run in parallel; the result is deterministic given `seed`.
OptResult opt0(const Matrix& gram_w, Index p, int restarts, std::uint64_t seed,
               const Opt0Options& options = {});

}  // namespace hdmm
