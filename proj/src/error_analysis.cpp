//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hdmm/error_analysis.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <sstream>

namespace hdmm {

namespace {

double union_frobenius_error(const LogicalWorkload& w, const UnionStrategy& s) {
  const Index n = w.schema.domain_size();
  if (n * n <= kDenseEntryCap) {
    // Exact: tr[(A^T A)^{-1} W^T W] with the stacked strategy Gram.
    Matrix sg = s.to_linop()->gram(kDenseEntryCap)->materialize(kDenseEntryCap);
    Matrix wg = impvec(w)->gram(kDenseEntryCap)->materialize(kDenseEntryCap);
    Eigen::LLT<Matrix> llt(sg);
    if (llt.info() != Eigen::Success)
      throw RankError("union strategy Gram is not positive definite");
    return llt.solve(wg).trace();
  }
  // Reconstruction bound: answer each term from its best product, with the
  // 1/share^2 noise inflation of the budget split.
  const auto grams = factor_grams(w);
  double total = 0.0;
  for (std::size_t j = 0; j < grams.size(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& term : s.terms) {
      double prod = 1.0;
      for (std::size_t i = 0; i < term.strategy.factors.size(); ++i)
        prod *= pid_objective(term.strategy.factors[i].theta, grams[j][i]);
      best = std::min(best, prod / (term.budget_share * term.budget_share));
    }
    total += w.terms[j].weight * w.terms[j].weight * best;
  }
  return total;
}

}  // namespace

double workload_frobenius_error(const LogicalWorkload& w, const Strategy& s) {
  w.validate();
  return std::visit(
      [&](const auto& impl) -> double {
        using T = std::decay_t<decltype(impl)>;
        if constexpr (std::is_same_v<T, KronStrategy>) {
          return union_error(w, impl);
        } else if constexpr (std::is_same_v<T, UnionStrategy>) {
          return union_frobenius_error(w, impl);
        } else {
          // Scale-invariant objective already carries the (sum theta)^2
          // sensitivity factor.
          return marg_objective(impl, marginal_workload_vector(w));
        }
      },
      s.impl());
}

double expected_error(const LogicalWorkload& w, const Strategy& s,
                      double epsilon) {
  if (!(epsilon > 0.0)) throw DomainError("expected_error: epsilon must be > 0");
  return 2.0 / (epsilon * epsilon) * workload_frobenius_error(w, s);
}

double identity_error(const LogicalWorkload& w, double epsilon) {
  if (!(epsilon > 0.0)) throw DomainError("identity_error: epsilon must be > 0");
  const auto stats = workload_stats(w);
  double frob = 0.0;
  for (std::size_t j = 0; j < stats.size(); ++j) {
    double prod = w.terms[j].weight * w.terms[j].weight;
    for (const auto& fs : stats[j]) prod *= fs.trace;
    frob += prod;
  }
  return 2.0 / (epsilon * epsilon) * frob;
}

double lm_error(const LogicalWorkload& w, double epsilon) {
  if (!(epsilon > 0.0)) throw DomainError("lm_error: epsilon must be > 0");
  const auto stats = workload_stats(w);
  double sens = 0.0;
  double queries = 0.0;
  for (std::size_t j = 0; j < stats.size(); ++j) {
    double s = w.terms[j].weight;
    double rows = 1.0;
    for (const auto& fs : stats[j]) {
      s *= fs.sensitivity;
      rows *= static_cast<double>(fs.rows);
    }
    sens += s;
    queries += rows;
  }
  return 2.0 / (epsilon * epsilon) * sens * sens * queries;
}

double error_ratio(double other_error, double hdmm_error) {
  if (!(hdmm_error > 0.0)) throw DomainError("error_ratio: zero denominator");
  return std::sqrt(other_error / hdmm_error);
}

ErrorReport make_error_report(const LogicalWorkload& w, const Strategy& s,
                              const std::string& strategy_name, double epsilon,
                              const std::string& workload_name) {
  ErrorReport report;
  report.workload = workload_name;
  report.epsilon = epsilon;
  report.domain_size = w.schema.domain_size();
  report.query_count = w.query_count();
  report.term_count = static_cast<Index>(w.terms.size());

  const double hdmm = expected_error(w, s, epsilon);
  report.strategies.push_back(
      {strategy_name, hdmm, std::sqrt(hdmm), 1.0});
  const double ident = identity_error(w, epsilon);
  report.strategies.push_back(
      {"identity", ident, std::sqrt(ident), error_ratio(ident, hdmm)});
  const double lm = lm_error(w, epsilon);
  report.strategies.push_back(
      {"lm", lm, std::sqrt(lm), error_ratio(lm, hdmm)});
  return report;
}

std::string format_error_table(const ErrorReport& report) {
  std::ostringstream os;
  os << "workload: " << report.workload << "  (domain " << report.domain_size
     << ", " << report.term_count << " terms, " << report.query_count
     << " queries, epsilon " << report.epsilon << ")\n";
  char line[128];
  std::snprintf(line, sizeof(line), "%-12s %14s %14s %10s\n", "strategy",
                "error", "root error", "ratio");
  os << line;
  for (const auto& s : report.strategies) {
    std::snprintf(line, sizeof(line), "%-12s %14.6g %14.6g %10.4g\n",
                  s.name.c_str(), s.error, s.root_error, s.ratio_vs_hdmm);
    os << line;
  }
  return os.str();
}

}  // namespace hdmm
