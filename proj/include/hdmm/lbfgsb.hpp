//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <functional>
#include <vector>

#include "hdmm/types.hpp"

namespace hdmm {

// Objective callback: returns f(x) and fills grad (same size as x).
using BoundedObjective = std::function<double(const Vector& x, Vector& grad)>;

struct LbfgsOptions {
  int max_iterations = 1000;
  int history = 10;          // limited-memory pairs
  double f_rel_tol = 1e-9;   // relative objective improvement
  double g_inf_tol = 1e-6;   // projected-gradient infinity norm
  bool record_trace = false;
};

struct LbfgsResult {
  Vector x;
  double f = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // accepted objective values (when recorded)
};

// Limited-memory quasi-Newton descent with box constraints, projected search
// path and Armijo backtracking. Variables pinned at a bound with an
// inward-pointing gradient are frozen out of the quasi-Newton direction each
// iteration.
LbfgsResult minimize_bounded(const BoundedObjective& objective, Vector x0,
                             const Vector& lower, const Vector& upper,
                             const LbfgsOptions& options = {});

// Lower bounds only.
LbfgsResult minimize_bounded(const BoundedObjective& objective, Vector x0,
                             const Vector& lower, const LbfgsOptions& options = {});

}  // namespace hdmm
