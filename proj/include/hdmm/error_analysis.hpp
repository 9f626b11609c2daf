//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <string>
#include <vector>

#include "hdmm/mechanism.hpp"
#include "hdmm/workload.hpp"

namespace hdmm {

// ||W A^+||_F^2 for a sensitivity-1 strategy. Product and marginals strategies
// use the exact closed forms; unions are evaluated densely when the domain
// fits the entry cap and otherwise by the per-term best-group reconstruction
// bound (least squares can only do better).
double workload_frobenius_error(const LogicalWorkload& w, const Strategy& s);

// Expected total squared error (2/eps^2) ||A||_1^2 ||W A^+||_F^2.
double expected_error(const LogicalWorkload& w, const Strategy& s, double epsilon);

// Identity baseline: noise added to every cell of the data vector;
// error (2/eps^2) ||W||_F^2.
double identity_error(const LogicalWorkload& w, double epsilon);

// Laplace mechanism baseline: per-query noise at the stacked workload
// sensitivity; error (2/eps^2) ||W||_1^2 m.
double lm_error(const LogicalWorkload& w, double epsilon);

// sqrt(err_other / err_hdmm); epsilon independent.
double error_ratio(double other_error, double hdmm_error);

struct StrategyReport {
  std::string name;
  double error = 0.0;       // expected total squared error
  double root_error = 0.0;  // sqrt(error)
  double ratio_vs_hdmm = 0.0;
};

struct ErrorReport {
  std::string workload;
  double epsilon = 1.0;
  Index domain_size = 0;
  Index query_count = 0;
  Index term_count = 0;
  std::vector<StrategyReport> strategies;  // hdmm first
};

ErrorReport make_error_report(const LogicalWorkload& w, const Strategy& s,
                              const std::string& strategy_name, double epsilon,
                              const std::string& workload_name);

std::string format_error_table(const ErrorReport& report);

}  // namespace hdmm
