//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hdmm/lbfgsb.hpp"

using namespace hdmm;

TEST_CASE("unconstrained quadratic") {
  // f = 1/2 (x - c)^T diag(w) (x - c), minimum at c.
  Vector c(3), w(3);
  c << 1.0, -2.0, 3.0;
  w << 1.0, 10.0, 0.5;
  BoundedObjective f = [&](const Vector& x, Vector& g) {
    g = w.cwiseProduct(x - c);
    return 0.5 * (x - c).dot(g);
  };
  auto res = minimize_bounded(f, Vector::Zero(3),
                              Vector::Constant(3, -1e30));
  CHECK(res.converged);
  CHECK(res.x.isApprox(c, 1e-5));
}

TEST_CASE("active lower bounds") {
  // Minimum of ||x - c||^2 over x >= 0 clips negative coordinates.
  Vector c(4);
  c << 1.0, -2.0, 0.5, -0.1;
  BoundedObjective f = [&](const Vector& x, Vector& g) {
    g = 2.0 * (x - c);
    return (x - c).squaredNorm();
  };
  auto res = minimize_bounded(f, Vector::Constant(4, 0.5), Vector::Zero(4));
  CHECK(res.converged);
  Vector expected(4);
  expected << 1.0, 0.0, 0.5, 0.0;
  CHECK(res.x.isApprox(expected, 1e-6));
}

TEST_CASE("rosenbrock with bounds away from the optimum") {
  BoundedObjective f = [](const Vector& x, Vector& g) {
    const double a = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -400.0 * x[0] * a - 2.0 * (1.0 - x[0]);
    g[1] = 200.0 * a;
    return 100.0 * a * a + (1.0 - x[0]) * (1.0 - x[0]);
  };
  // Bound x[1] >= 1.5: constrained optimum sits on the bound.
  Vector lower(2);
  lower << -1e30, 1.5;
  LbfgsOptions opt;
  opt.max_iterations = 5000;
  opt.g_inf_tol = 1e-8;
  auto res = minimize_bounded(f, Vector::Zero(2).cwiseMax(lower), lower, opt);
  CHECK(res.x[1] == doctest::Approx(1.5));
  // Stationarity in the free coordinate.
  Vector g(2);
  f(res.x, g);
  CHECK(std::abs(g[0]) < 1e-4);
}

TEST_CASE("objective trace is monotone non-increasing") {
  Vector c = Vector::LinSpaced(6, -1.0, 2.0);
  BoundedObjective f = [&](const Vector& x, Vector& g) {
    g = 2.0 * (x - c);
    return (x - c).squaredNorm();
  };
  LbfgsOptions opt;
  opt.record_trace = true;
  auto res = minimize_bounded(f, Vector::Ones(6), Vector::Zero(6), opt);
  REQUIRE(res.trace.size() > 1);
  for (std::size_t i = 1; i < res.trace.size(); ++i)
    CHECK(res.trace[i] <= res.trace[i - 1] + 1e-12);
}
