//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hdmm/mechanism.hpp"

#include <cmath>
#include <iostream>

#include "hdmm/error_analysis.hpp"
#include "hdmm/rng.hpp"

namespace hdmm {

namespace {

constexpr double kNoiselessEpsilon = 1e12;

LinOpPtr strategy_linop(const Strategy::Impl& impl) {
  return std::visit(
      [](const auto& s) -> LinOpPtr {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KronStrategy>) {
          return s.to_linop();
        } else if constexpr (std::is_same_v<T, UnionStrategy>) {
          return s.to_linop();
        } else {
          return marg_strategy_matrix(s);
        }
      },
      impl);
}

Strategy::Impl normalize(Strategy::Impl impl) {
  if (auto* m = std::get_if<MarginalsStrategy>(&impl)) {
    const double total = m->theta.sum();
    if (!(total > 0.0))
      throw DomainError("strategy: marginals weights must not be all zero");
    m->theta /= total;
  }
  if (auto* u = std::get_if<UnionStrategy>(&impl)) {
    double total = 0.0;
    for (const auto& t : u->terms) total += t.budget_share;
    if (std::abs(total - 1.0) > 1e-9)
      throw DomainError("strategy: union budget shares must sum to 1");
  }
  return impl;
}

}  // namespace

void DataVector::validate() const {
  schema.validate();
  if (counts.size() != schema.domain_size())
    throw ShapeError("data vector length must equal the domain size");
  if ((counts.array() < 0.0).any())
    std::cerr << "warning: data vector has negative entries\n";
}

Strategy::Strategy(Impl impl)
    : impl_(normalize(std::move(impl))), op_(strategy_linop(impl_)) {
  const double sens = op_->sensitivity();
  if (std::abs(sens - 1.0) > 1e-10)
    throw DomainError("strategy sensitivity must be 1, got " +
                      std::to_string(sens));
}

Vector Strategy::reconstruct(const Eigen::Ref<const Vector>& y) const {
  check_shape(y.size() == rows(), "reconstruct: measurement size mismatch");
  return std::visit(
      [&](const auto& s) -> Vector {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KronStrategy>) {
          return op_->pinv_apply(y);
        } else if constexpr (std::is_same_v<T, UnionStrategy>) {
          // Budget-scaled strategies condition the normal equations poorly;
          // drive the residual far below the answer tolerance.
          LstsqResult r = lstsq_iterative(*op_, y, 1e-13, 20 * op_->cols());
          if (!r.converged && r.residual > 1e-9)
            std::cerr << "warning: iterative least squares stopped at residual "
                      << r.residual << "\n";
          return std::move(r.x);
        } else {
          // M^+ y = (M^T M)^{-1} M^T y through the G-basis inverse. Near the
          // support floor the inverse weights span ~1/theta_full^2 orders of
          // magnitude and the closed form cancels them in double precision;
          // hand those off to the iterative solver instead.
          GramWeights v = gram_pinv_weights(s);
          if (v.v.cwiseAbs().maxCoeff() < 1e6)
            return marginals_gram(v.v, v.domain)->apply(op_->apply_t(y));
          LstsqResult r = lstsq_iterative(*op_, y, 1e-13, 20 * op_->cols());
          return std::move(r.x);
        }
      },
      impl_);
}

Strategy identity_strategy(const Schema& schema) {
  KronStrategy ks;
  for (const auto& a : schema.attributes)
    ks.factors.push_back({Matrix::Zero(1, a.size)});
  return Strategy(std::move(ks));
}

HdmmSelection opt_hdmm(const LogicalWorkload& w, const OperatorSet& operators,
                       int restarts, std::uint64_t seed,
                       const HdmmOptions& options) {
  w.validate();
  HdmmSelection best{identity_strategy(w.schema), 0.0, "identity"};
  double best_err = workload_frobenius_error(w, best.strategy);

  auto consider = [&](Strategy s, const std::string& name) {
    const double err = workload_frobenius_error(w, s);
    if (err < best_err) {
      best_err = err;
      best = {std::move(s), 0.0, name};
    }
  };

  OptKronOptions ko = options.kron;
  if (ko.threads == 0) ko.threads = options.threads;
  OptMargOptions mo = options.marginals;
  if (mo.threads == 0) mo.threads = options.threads;
  const std::vector<Index> p = default_p(w);

  std::optional<std::vector<std::vector<Index>>> partition;
  if (operators.plus) partition = default_partition(w);

  if (operators.kron) {
    OptKronResult kr = opt_kron(w, p, restarts, seed, ko);
    consider(Strategy(std::move(kr.strategy)), "kron");
  }
  if (operators.plus) {
    if (partition->size() == 1 && operators.kron) {
      // Single group: OPT+ coincides with OPT(x) just evaluated.
    } else {
      OptPlusResult pr = opt_plus(w, *partition, p, restarts, seed, ko);
      consider(Strategy(std::move(pr.strategy)), "plus");
    }
  }
  if (operators.marginals) {
    OptMargResult mr = opt_marg(w, restarts, seed, mo);
    consider(Strategy(std::move(mr.strategy)), "marginals");
  }

  best.expected_root_error = std::sqrt(2.0 * best_err);  // at epsilon = 1
  return best;
}

Vector measure(const Strategy& strategy, const DataVector& data, double epsilon,
               std::uint64_t seed) {
  data.validate();
  if (!(epsilon > 0.0)) throw DomainError("measure: epsilon must be > 0");
  check_shape(strategy.cols() == data.counts.size(),
              "measure: strategy and data dimensions differ");
  Vector y = strategy.op()->apply(data.counts);
  if (epsilon >= kNoiselessEpsilon) return y;
  const double scale = strategy.op()->sensitivity() / epsilon;
  Rng rng(seed, /*stream=*/3);
  for (Index i = 0; i < y.size(); ++i) y[i] += rng.laplace(scale);
  return y;
}

Vector answer(const LogicalWorkload& w, const Eigen::Ref<const Vector>& xbar) {
  check_shape(xbar.size() == w.schema.domain_size(),
              "answer: estimate length must equal the domain size");
  return impvec(w)->apply(xbar);
}

PrivateAnswer run_hdmm(const LogicalWorkload& w, const DataVector& data,
                       double epsilon, const OperatorSet& operators,
                       int restarts, std::uint64_t seed,
                       const HdmmOptions& options) {
  // Strategy selection is independent of the data; only `measure` touches it.
  HdmmSelection sel = opt_hdmm(w, operators, restarts, seed, options);
  PrivateAnswer out;
  out.epsilon = epsilon;
  out.seed = seed;
  out.noisy_measurements = measure(sel.strategy, data, epsilon, seed);
  out.reconstructed = sel.strategy.reconstruct(out.noisy_measurements);
  out.workload_answers = answer(w, out.reconstructed);
  return out;
}

}  // namespace hdmm
