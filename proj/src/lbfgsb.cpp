//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hdmm/lbfgsb.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace hdmm {

namespace {

struct Pair {
  Vector s, y;
  double rho;
};

Vector clamp(const Vector& x, const Vector& lower, const Vector& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

bool pinned(double x, double g, double lo, double hi) {
  return (x <= lo && g > 0.0) || (x >= hi && g < 0.0);
}

// Projected gradient: zero where the variable sits on a bound and the
// gradient points outward.
Vector projected_gradient(const Vector& x, const Vector& g, const Vector& lower,
                          const Vector& upper) {
  Vector pg = g;
  for (Index i = 0; i < x.size(); ++i)
    if (pinned(x[i], g[i], lower[i], upper[i])) pg[i] = 0.0;
  return pg;
}

// Two-loop recursion for -H g restricted to the free set (frozen entries are
// masked out of the gradient before the recursion and of the result after).
Vector lbfgs_direction(const std::deque<Pair>& mem, const Vector& g,
                       const std::vector<bool>& frozen) {
  Vector q = g;
  for (Index i = 0; i < q.size(); ++i)
    if (frozen[i]) q[i] = 0.0;
  if (mem.empty()) return -q;
  std::vector<double> alpha(mem.size());
  for (std::size_t k = mem.size(); k-- > 0;) {
    const Pair& p = mem[k];
    alpha[k] = p.rho * p.s.dot(q);
    q -= alpha[k] * p.y;
  }
  const Pair& last = mem.back();
  const double gamma = last.s.dot(last.y) / last.y.squaredNorm();
  q *= gamma;
  for (std::size_t k = 0; k < mem.size(); ++k) {
    const Pair& p = mem[k];
    const double beta = p.rho * p.y.dot(q);
    q += (alpha[k] - beta) * p.s;
  }
  for (Index i = 0; i < q.size(); ++i)
    if (frozen[i]) q[i] = 0.0;
  return -q;
}

}  // namespace

LbfgsResult minimize_bounded(const BoundedObjective& objective, Vector x0,
                             const Vector& lower, const Vector& upper,
                             const LbfgsOptions& options) {
  const Index n = x0.size();
  check_shape(lower.size() == n && upper.size() == n,
              "minimize_bounded: bound size mismatch");

  LbfgsResult res;
  res.x = clamp(x0, lower, upper);
  Vector g(n);
  res.f = objective(res.x, g);
  if (options.record_trace) res.trace.push_back(res.f);

  std::deque<Pair> mem;
  std::vector<bool> frozen(n, false);
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 40;
  // The relative-improvement stop must be sustained: single stalled line
  // searches happen well before the gradient settles.
  constexpr int kStallPatience = 3;
  int stalled_iters = 0;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Vector pg = projected_gradient(res.x, g, lower, upper);
    if (pg.lpNorm<Eigen::Infinity>() < options.g_inf_tol) {
      res.converged = true;
      break;
    }

    for (Index i = 0; i < n; ++i)
      frozen[i] = pinned(res.x[i], g[i], lower[i], upper[i]);

    Vector d = lbfgs_direction(mem, g, frozen);
    double dir_deriv = d.dot(g);
    if (!(dir_deriv < 0.0) || !d.allFinite()) {
      mem.clear();
      d = -pg;
      dir_deriv = d.dot(g);
      if (!(dir_deriv < 0.0)) break;  // numerically stationary
    }

    // Backtracking along the projected path x(a) = clamp(x + a d).
    double step = iter == 0 ? std::min(1.0, 1.0 / pg.lpNorm<1>()) : 1.0;
    Vector x_new(n), g_new(n);
    double f_new = res.f;
    bool accepted = false;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      x_new = clamp(res.x + step * d, lower, upper);
      const Vector actual = x_new - res.x;
      if (actual.lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= res.f + kArmijo * g.dot(actual)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // Try plain projected steepest descent before giving up.
      if (!mem.empty()) {
        mem.clear();
        continue;
      }
      break;
    }

    Vector s = x_new - res.x;
    Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      mem.push_back({std::move(s), std::move(y), 1.0 / sy});
      if (static_cast<int>(mem.size()) > options.history) mem.pop_front();
    }

    const double improvement = res.f - f_new;
    res.x = std::move(x_new);
    g = std::move(g_new);
    res.f = f_new;
    res.iterations = iter + 1;
    if (options.record_trace) res.trace.push_back(res.f);

    if (improvement >= 0.0 &&
        improvement < options.f_rel_tol * std::max({std::abs(res.f), 1.0})) {
      if (++stalled_iters >= kStallPatience) {
        res.converged = true;
        break;
      }
    } else {
      stalled_iters = 0;
    }
  }
  return res;
}

LbfgsResult minimize_bounded(const BoundedObjective& objective, Vector x0,
                             const Vector& lower, const LbfgsOptions& options) {
  const Vector upper =
      Vector::Constant(x0.size(), std::numeric_limits<double>::infinity());
  return minimize_bounded(objective, std::move(x0), lower, upper, options);
}

}  // namespace hdmm
