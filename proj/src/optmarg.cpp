//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hdmm/optmarg.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "hdmm/lbfgsb.hpp"
#include "hdmm/rng.hpp"

namespace hdmm {

void MarginalsStrategy::validate() const {
  if (domain.empty() || domain.size() > 16)
    throw DomainError("marginals strategy: 1..16 attributes supported");
  const Index count = Index{1} << domain.size();
  if (theta.size() != count)
    throw DomainError("marginals strategy: theta must have length 2^d");
  if (!theta.allFinite() || (theta.array() < 0.0).any())
    throw DomainError("marginals strategy: theta must be nonnegative and finite");
}

Vector marginal_workload_vector(
    const std::vector<std::vector<FactorStats>>& stats,
    const std::vector<double>& weights, Index d) {
  const MaskIndex count = MaskIndex{1} << d;
  Vector m = Vector::Zero(count);
  for (std::size_t j = 0; j < stats.size(); ++j) {
    const double wj2 = weights[j] * weights[j];
    for (MaskIndex a = 0; a < count; ++a) {
      double prod = wj2;
      for (Index i = 0; i < d; ++i)
        prod *= ((a >> i) & 1u) ? stats[j][i].trace : stats[j][i].sum;
      m[a] += prod;
    }
  }
  return m;
}

Vector marginal_workload_vector(const LogicalWorkload& w) {
  std::vector<double> weights;
  for (const auto& t : w.terms) weights.push_back(t.weight);
  return marginal_workload_vector(workload_stats(w), weights,
                                  w.schema.dimensions());
}

Matrix xmat(const GramWeights& u) {
  const int d = static_cast<int>(u.domain.size());
  const MaskIndex count = MaskIndex{1} << d;
  if (u.v.size() != static_cast<Index>(count))
    throw DomainError("xmat: weight length must be 2^d");
  const Vector c = c_table(u.domain);
  Matrix x = Matrix::Zero(count, count);
  for (MaskIndex a = 0; a < count; ++a) {
    if (u.v[a] == 0.0) continue;
    for (MaskIndex b = 0; b < count; ++b) x(a & b, b) += u.v[a] * c[a | b];
  }
  return x;
}

GramWeights gram_pinv_weights(const MarginalsStrategy& strategy) {
  strategy.validate();
  const Index count = strategy.theta.size();
  if (!(strategy.theta[count - 1] > 0.0))
    throw SupportError(
        "marginals strategy: full-contingency weight must be positive");
  Vector u = strategy.theta.cwiseProduct(strategy.theta);
  return {g_inverse_weights(u, strategy.domain), strategy.domain};
}

// objective = s^2 * (v . m) with s = sum(theta), u = theta^2, X(u) v = e_full.
// Adjoint gradient: with lambda solving X(u)^T lambda = m,
//   d(v.m)/du_a = -sum_b lambda_{a&b} c(a|b) v_b
// and du_a/dtheta_a = 2 theta_a.
double marg_objective(const MarginalsStrategy& strategy, const Vector& mvec,
                      Vector* grad) {
  strategy.validate();
  const int d = static_cast<int>(strategy.domain.size());
  const MaskIndex count = MaskIndex{1} << d;
  if (mvec.size() != static_cast<Index>(count))
    throw DomainError("marg_objective: stats vector must have length 2^d");
  if (!(strategy.theta[count - 1] > 0.0))
    throw SupportError("marg_objective: full-contingency weight must be positive");

  const Vector c = c_table(strategy.domain);
  const Vector u = strategy.theta.cwiseProduct(strategy.theta);
  Vector z = Vector::Zero(count);
  z[count - 1] = 1.0;
  const std::vector<long double> v = solve_x_system(u, z, c, d);
  const double s = strategy.theta.sum();
  long double t = 0.0L;
  for (MaskIndex k = 0; k < count; ++k) t += v[k] * static_cast<long double>(mvec[k]);
  const double objective = s * s * static_cast<double>(t);
  if (grad == nullptr) return objective;

  const std::vector<long double> lambda = solve_xt_system(u, mvec, c, d);
  Vector q(count);
  for (MaskIndex a = 0; a < count; ++a) {
    long double acc = 0.0L;
    for (MaskIndex b = 0; b < count; ++b)
      if (v[b] != 0.0L) acc += lambda[a & b] * c[a | b] * v[b];
    q[a] = static_cast<double>(acc);
  }
  grad->resize(count);
  *grad = Vector::Constant(count, 2.0 * s * static_cast<double>(t)) -
          2.0 * s * s * strategy.theta.cwiseProduct(q);
  return objective;
}

OptMargResult opt_marg(const LogicalWorkload& w, int restarts,
                       std::uint64_t seed, const OptMargOptions& options) {
  w.validate();
  const Index d = w.schema.dimensions();
  if (d > 16) throw DomainError("opt_marg: at most 16 attributes");
  if (restarts < 1) throw DomainError("opt_marg: restarts must be >= 1");
  const MaskIndex count = MaskIndex{1} << d;
  std::vector<Index> domain;
  for (const auto& a : w.schema.attributes) domain.push_back(a.size);
  const Vector mvec = marginal_workload_vector(w);

  const Vector lower = Vector::Zero(count);
  const double floor = options.full_weight_floor;

  // Evaluate at theta with the full-contingency weight clamped to the
  // relative floor; chain the clamp through the gradient.
  BoundedObjective fn = [&](const Vector& x, Vector& g) {
    const double total = x.sum();
    if (!(total > 0.0)) {  // degenerate trial point; line search backs off
      g = Vector::Zero(count);
      return std::numeric_limits<double>::infinity();
    }
    const double target = floor * total;
    Vector eff = x;
    const bool clamped = eff[count - 1] < target;
    if (clamped) eff[count - 1] = target;
    const double f = marg_objective({eff, domain}, mvec, &g);
    if (clamped) {
      const double g_full = g[count - 1];
      g.array() += floor * g_full;
      g[count - 1] = floor * g_full;
    }
    return f;
  };
  // Canonical representative of the argmin ray: clamped, normalized to sum 1.
  auto finalize = [&](const Vector& x) {
    Vector theta = x;
    theta[count - 1] = std::max(theta[count - 1], floor * theta.sum());
    theta /= theta.sum();
    return MarginalsStrategy{std::move(theta), domain};
  };

  LbfgsOptions lo;
  lo.max_iterations = options.max_iterations;
  lo.f_rel_tol = options.f_rel_tol;
  lo.g_inf_tol = options.g_inf_tol;

  std::vector<OptMargResult> results(restarts);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int r = next.fetch_add(1); r < restarts; r = next.fetch_add(1)) {
      Rng rng(derive_seed(seed, /*stream=*/2, static_cast<std::uint64_t>(r)));
      Vector theta0 = rng.uniform_vector(count);
      theta0 /= theta0.sum();  // scale-invariant objective; start at sum 1
      LbfgsResult lr = minimize_bounded(fn, std::move(theta0), lower, lo);
      OptMargResult out;
      out.strategy = finalize(lr.x);
      out.objective = marg_objective(out.strategy, mvec);
      out.iterations = lr.iterations;
      // A non-positive objective can only be numerical noise; poison it so
      // the reduction ignores this restart.
      if (!(out.objective > 0.0) || !std::isfinite(out.objective))
        out.objective = std::numeric_limits<double>::infinity();
      out.converged = lr.converged;
      results[r] = std::move(out);
    }
  };
  int threads = options.threads > 0
                    ? options.threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, restarts));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  int best = 0;
  for (int r = 1; r < restarts; ++r)
    if (results[r].objective < results[best].objective) best = r;

  // Gradient-only polish of the winner (see opt0).
  LbfgsOptions po = lo;
  po.f_rel_tol = 0.0;
  LbfgsResult lr = minimize_bounded(fn, results[best].strategy.theta, lower, po);
  OptMargResult out;
  out.strategy = finalize(lr.x);
  out.objective = marg_objective(out.strategy, mvec);
  if (!(out.objective > 0.0) || !std::isfinite(out.objective) ||
      out.objective > results[best].objective)
    return std::move(results[best]);
  out.iterations = results[best].iterations + lr.iterations;
  out.converged = lr.converged;
  return out;
}

LinOpPtr marg_strategy_matrix(const MarginalsStrategy& strategy) {
  strategy.validate();
  if (strategy.theta.sum() <= 0.0)
    throw DomainError("marg_strategy_matrix: all-zero theta");
  const Index d = strategy.dimensions();
  std::vector<std::pair<double, LinOpPtr>> terms;
  for (Index a = 0; a < strategy.theta.size(); ++a) {
    if (strategy.theta[a] <= 0.0) continue;
    std::vector<LinOpPtr> factors;
    factors.reserve(d);
    for (Index i = 0; i < d; ++i)
      factors.push_back(((a >> i) & 1) ? identity(strategy.domain[i])
                                       : ones(1, strategy.domain[i]));
    terms.emplace_back(strategy.theta[a], kron(std::move(factors)));
  }
  return stack(std::move(terms));
}

}  // namespace hdmm
