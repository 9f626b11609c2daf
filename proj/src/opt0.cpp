//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hdmm/opt0.hpp"

#include <Eigen/Cholesky>
#include <atomic>
#include <limits>
#include <thread>

#include "hdmm/rng.hpp"

namespace hdmm {

LinOpPtr build_pidentity(const Matrix& theta) { return p_identity(theta); }

// With D^{-1} = diag(c), c_j = 1 + sum_k Theta_kj, and M = I_p + Theta Theta^T:
//   (A^T A)^{-1} = D^{-1} [I - Theta^T M^{-1} Theta] D^{-1}
//   C = tr(G^) - tr(M^{-1} Theta G^ Theta^T),  G^ = D^{-1} G D^{-1}
// For the gradient, F = (I - Theta^T M^{-1} Theta) G^ (I - Theta^T M^{-1} Theta)
// gives dC/dTheta_kl = -2 (Theta F)_kl + 2 d_l (F_ll + sum_k Theta_kl (Theta F)_kl).
double pid_objective(const Matrix& theta, const Matrix& gram_w, Matrix* grad) {
  const Index p = theta.rows();
  const Index n = theta.cols();
  check_shape(gram_w.rows() == n && gram_w.cols() == n,
              "pid_objective: Gram size must match theta columns");

  const Vector c = theta.colwise().sum().transpose().array() + 1.0;
  Matrix ghat = gram_w;
  ghat.array().colwise() *= c.array();
  ghat.array().rowwise() *= c.transpose().array();

  Eigen::LLT<Matrix> llt(Matrix::Identity(p, p) + theta * theta.transpose());
  if (llt.info() != Eigen::Success)
    throw RankError("pid_objective: capacitance factorization failed");

  Matrix y = theta * ghat;         // p x n
  Matrix u = llt.solve(y);         // M^{-1} Theta G^
  const double objective = ghat.trace() - (theta.array() * u.array()).sum();
  if (grad == nullptr) return objective;

  Matrix pmat = llt.solve(theta);              // M^{-1} Theta
  Matrix k = u * theta.transpose();            // p x p
  Matrix v = k * pmat;                         // p x n
  Matrix theta_sq = theta * theta.transpose(); // = M - I

  // diag(F) and Theta F without forming F densely.
  Vector fdiag = ghat.diagonal() - 2.0 * (theta.array() * u.array()).colwise().sum().matrix().transpose() +
                 (theta.array() * v.array()).colwise().sum().matrix().transpose();
  Matrix theta_f = y - theta_sq * u - k.transpose() * theta + theta_sq * v;

  Vector tau = (theta.array() * theta_f.array()).colwise().sum().matrix().transpose();
  grad->resize(p, n);
  *grad = -2.0 * theta_f;
  grad->array().rowwise() +=
      (2.0 * (fdiag + tau).array() / c.array()).transpose();
  return objective;
}

// Upper box bound on Theta entries. The objective plateaus in any
// total-query direction; past ~1e3 the Woodbury trace cancels to rounding
// noise while the remaining descent is O(n / theta^2), so the bound trades
// a <=0.1% plateau bias for a sound evaluation.
constexpr double kThetaCap = 1e3;

OptResult opt0_minimize(const Matrix& theta0, const Matrix& gram_w,
                        const Opt0Options& options) {
  const Index p = theta0.rows();
  const Index n = theta0.cols();
  BoundedObjective fn = [&](const Vector& x, Vector& g) {
    Eigen::Map<const Matrix> theta(x.data(), p, n);
    Matrix grad;
    const double f = pid_objective(theta, gram_w, &grad);
    g = Eigen::Map<const Vector>(grad.data(), grad.size());
    return f;
  };
  LbfgsOptions lo;
  lo.max_iterations = options.max_iterations;
  lo.f_rel_tol = options.f_rel_tol;
  lo.g_inf_tol = options.g_inf_tol;
  lo.record_trace = options.record_trace;
  Vector x0 = Eigen::Map<const Vector>(theta0.data(), theta0.size());
  LbfgsResult lr = minimize_bounded(fn, std::move(x0), Vector::Zero(p * n),
                                    Vector::Constant(p * n, kThetaCap), lo);

  OptResult out;
  out.params.theta = Eigen::Map<const Matrix>(lr.x.data(), p, n);
  out.objective = lr.f;
  out.iterations = lr.iterations;
  out.converged = lr.converged;
  out.trace = std::move(lr.trace);
  return out;
}

OptResult opt0(const Matrix& gram_w, Index p, int restarts, std::uint64_t seed,
               const Opt0Options& options) {
  const Index n = gram_w.rows();
  check_shape(gram_w.cols() == n, "opt0: Gram must be square");
  if (p < 1) throw DomainError("opt0: p must be >= 1");
  if (restarts < 1) throw DomainError("opt0: restarts must be >= 1");
  p = std::min(p, n);

  std::vector<OptResult> results(restarts);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int r = next.fetch_add(1); r < restarts; r = next.fetch_add(1)) {
      Rng rng(derive_seed(seed, /*stream=*/0, static_cast<std::uint64_t>(r)));
      results[r] = opt0_minimize(rng.uniform_matrix(p, n), gram_w, options);
      // tr[(A^T A)^{-1} W^T W] is positive; anything else is rounding noise.
      if (!(results[r].objective > 0.0) || !std::isfinite(results[r].objective))
        results[r].objective = std::numeric_limits<double>::infinity();
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
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  int best = 0;
  for (int r = 1; r < restarts; ++r)
    if (results[r].objective < results[best].objective) best = r;

  // Polish the winner with a gradient-only stop so the returned point is
  // first-order optimal, not merely where the objective stalled.
  Opt0Options polish = options;
  polish.f_rel_tol = 0.0;
  OptResult out = opt0_minimize(results[best].params.theta, gram_w, polish);
  if (out.objective > results[best].objective) return std::move(results[best]);
  out.iterations += results[best].iterations;
  if (options.record_trace) {
    std::vector<double> trace = std::move(results[best].trace);
    trace.insert(trace.end(), out.trace.begin(), out.trace.end());
    out.trace = std::move(trace);
  }
  return out;
}

}  // namespace hdmm
