//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hdmm/optkron.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "hdmm/rng.hpp"

namespace hdmm {

namespace {

// tr[(A(Theta)^T A(Theta))^{-1} G] for one factor.
double factor_error(const PIdentityParams& factor, const Matrix& gram) {
  return pid_objective(factor.theta, gram);
}

// t[i][j] = per-factor error of term j on attribute i.
std::vector<std::vector<double>> factor_error_table(
    const std::vector<std::vector<Matrix>>& grams, const KronStrategy& strat) {
  const std::size_t k = grams.size();
  const std::size_t d = strat.factors.size();
  std::vector<std::vector<double>> t(d, std::vector<double>(k));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < k; ++j)
      t[i][j] = factor_error(strat.factors[i], grams[j][i]);
  return t;
}

double union_error_from_table(const std::vector<std::vector<double>>& t,
                              const std::vector<double>& weights) {
  double total = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    double prod = weights[j] * weights[j];
    for (std::size_t i = 0; i < t.size(); ++i) prod *= t[i][j];
    total += prod;
  }
  return total;
}

std::vector<double> term_weights(const LogicalWorkload& w) {
  std::vector<double> ws;
  ws.reserve(w.terms.size());
  for (const auto& t : w.terms) ws.push_back(t.weight);
  return ws;
}

void run_parallel(int threads, int jobs, const std::function<void(int)>& fn) {
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int j = next.fetch_add(1); j < jobs; j = next.fetch_add(1)) fn(j);
  };
  threads = threads > 0 ? threads
                        : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, jobs));
  if (threads == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

}  // namespace

LinOpPtr KronStrategy::to_linop() const {
  std::vector<LinOpPtr> ops;
  ops.reserve(factors.size());
  for (const auto& f : factors) ops.push_back(p_identity(f.theta));
  return kron(std::move(ops));
}

LinOpPtr UnionStrategy::to_linop() const {
  std::vector<std::pair<double, LinOpPtr>> parts;
  parts.reserve(terms.size());
  for (const auto& t : terms)
    parts.emplace_back(t.budget_share, t.strategy.to_linop());
  return stack(std::move(parts));
}

std::vector<std::vector<Matrix>> factor_grams(const LogicalWorkload& w) {
  std::vector<std::vector<Matrix>> grams;
  grams.reserve(w.terms.size());
  for (const auto& t : w.terms) {
    std::vector<Matrix> per_attr;
    per_attr.reserve(w.schema.dimensions());
    for (Index i = 0; i < w.schema.dimensions(); ++i)
      per_attr.push_back(
          factor_gram(w.block_for(t, i), w.schema.attributes[i].size));
    grams.push_back(std::move(per_attr));
  }
  return grams;
}

double union_error(const std::vector<std::vector<Matrix>>& grams,
                   const std::vector<double>& weights,
                   const KronStrategy& strat) {
  return union_error_from_table(factor_error_table(grams, strat), weights);
}

double union_error(const LogicalWorkload& w, const KronStrategy& strat) {
  return union_error(factor_grams(w), term_weights(w), strat);
}

Matrix surrogate_gram(const std::vector<std::vector<Matrix>>& grams,
                      const std::vector<double>& weights,
                      const KronStrategy& strat, Index attr) {
  const Index n = grams.front()[attr].rows();
  Matrix g = Matrix::Zero(n, n);
  for (std::size_t j = 0; j < grams.size(); ++j) {
    double cj_sq = weights[j] * weights[j];
    for (std::size_t i = 0; i < strat.factors.size(); ++i)
      if (static_cast<Index>(i) != attr)
        cj_sq *= factor_error(strat.factors[i], grams[j][i]);
    g += cj_sq * grams[j][attr];
  }
  return g;
}

Matrix surrogate_gram(const LogicalWorkload& w, const KronStrategy& strat,
                      Index attr) {
  return surrogate_gram(factor_grams(w), term_weights(w), strat, attr);
}

OptKronResult opt_kron(const LogicalWorkload& w, const std::vector<Index>& p,
                       int restarts, std::uint64_t seed,
                       const OptKronOptions& options) {
  w.validate();
  const Index d = w.schema.dimensions();
  if (static_cast<Index>(p.size()) != d)
    throw DomainError("opt_kron: p must have one entry per attribute");
  if (restarts < 1) throw DomainError("opt_kron: restarts must be >= 1");
  const auto grams = factor_grams(w);
  const auto weights = term_weights(w);

  Opt0Options inner = options.opt0;
  inner.threads = 1;  // restarts are the parallel axis

  std::vector<OptKronResult> results(restarts);
  run_parallel(options.threads, restarts, [&](int r) {
    Rng rng(derive_seed(seed, /*stream=*/0, static_cast<std::uint64_t>(r)));
    OptKronResult res;
    res.strategy.factors.resize(d);
    for (Index i = 0; i < d; ++i) {
      const Index n = w.schema.attributes[i].size;
      const Index pi = std::min<Index>(std::max<Index>(p[i], 1), n);
      res.strategy.factors[i].theta = rng.uniform_matrix(pi, n);
    }
    auto table = factor_error_table(grams, res.strategy);
    double err = union_error_from_table(table, weights);
    res.sweep_trace.push_back(err);
    // With one attribute the surrogate is the fixed workload Gram and the
    // subproblem is solved exactly in one pass.
    const int max_sweeps = d == 1 ? 1 : options.max_sweeps;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      for (Index i = 0; i < d; ++i) {
        Matrix sg = surrogate_gram(grams, weights, res.strategy, i);
        OptResult fr = opt0_minimize(res.strategy.factors[i].theta, sg, inner);
        res.strategy.factors[i].theta = std::move(fr.params.theta);
        for (std::size_t j = 0; j < weights.size(); ++j)
          table[i][j] = factor_error(res.strategy.factors[i], grams[j][i]);
      }
      const double next = union_error_from_table(table, weights);
      res.sweep_trace.push_back(next);
      const bool stalled = err - next < options.sweep_rel_tol * err;
      err = next;
      if (stalled || d == 1) {
        res.converged = true;
        break;
      }
    }
    res.error = err;
    if (!(res.error > 0.0) || !std::isfinite(res.error))
      res.error = std::numeric_limits<double>::infinity();
    results[r] = std::move(res);
  });

  int best = 0;
  for (int r = 1; r < restarts; ++r)
    if (results[r].error < results[best].error) best = r;
  return std::move(results[best]);
}

std::vector<std::vector<Index>> default_partition(const LogicalWorkload& w) {
  // Support pattern: the set of attributes whose block is not Total.
  struct Group {
    std::vector<Index> pattern;
    std::vector<Index> terms;
    double mass = 0.0;
  };
  const auto stats = workload_stats(w);
  std::vector<Group> groups;
  for (Index j = 0; j < static_cast<Index>(w.terms.size()); ++j) {
    std::vector<Index> pattern;
    for (Index i = 0; i < w.schema.dimensions(); ++i)
      if (!std::holds_alternative<TotalBlock>(w.block_for(w.terms[j], i)))
        pattern.push_back(i);
    double mass = w.terms[j].weight * w.terms[j].weight;
    for (const auto& fs : stats[j]) mass *= fs.trace;
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const Group& g) { return g.pattern == pattern; });
    if (it == groups.end()) {
      groups.push_back({std::move(pattern), {j}, mass});
    } else {
      it->terms.push_back(j);
      it->mass += mass;
    }
  }
  if (groups.size() <= 2) {
    std::vector<std::vector<Index>> out;
    for (auto& g : groups) out.push_back(std::move(g.terms));
    return out;
  }
  // Greedy balance into exactly two groups: heaviest pattern first onto the
  // lighter side; ties broken by first term index for determinism.
  std::stable_sort(groups.begin(), groups.end(),
                   [](const Group& a, const Group& b) { return a.mass > b.mass; });
  std::vector<std::vector<Index>> out(2);
  double mass[2] = {0.0, 0.0};
  for (const auto& g : groups) {
    const int side = mass[0] <= mass[1] ? 0 : 1;
    out[side].insert(out[side].end(), g.terms.begin(), g.terms.end());
    mass[side] += g.mass;
  }
  for (auto& side : out) std::sort(side.begin(), side.end());
  return out;
}

OptPlusResult opt_plus(const LogicalWorkload& w,
                       const std::vector<std::vector<Index>>& partition,
                       const std::vector<Index>& p, int restarts,
                       std::uint64_t seed, const OptKronOptions& options) {
  w.validate();
  std::vector<bool> covered(w.terms.size(), false);
  for (const auto& group : partition) {
    if (group.empty()) throw DomainError("opt_plus: empty term group");
    for (Index j : group) {
      if (j < 0 || j >= static_cast<Index>(w.terms.size()) || covered[j])
        throw DomainError("opt_plus: partition must cover terms exactly once");
      covered[j] = true;
    }
  }
  if (!std::all_of(covered.begin(), covered.end(), [](bool b) { return b; }))
    throw DomainError("opt_plus: partition must cover all terms");

  const double share = 1.0 / static_cast<double>(partition.size());
  OptPlusResult res;
  res.converged = true;
  for (std::size_t g = 0; g < partition.size(); ++g) {
    LogicalWorkload sub;
    sub.schema = w.schema;
    for (Index j : partition[g]) sub.terms.push_back(w.terms[j]);
    // A single group degenerates to opt_kron itself, seed included.
    const std::uint64_t group_seed =
        partition.size() == 1 ? seed : derive_seed(seed, /*stream=*/1, g);
    OptKronResult kr = opt_kron(sub, p, restarts, group_seed, options);
    res.error += kr.error / (share * share);
    res.converged = res.converged && kr.converged;
    res.strategy.terms.push_back({share, std::move(kr.strategy)});
  }
  return res;
}

std::vector<Index> default_p(const LogicalWorkload& w) {
  std::vector<Index> p(w.schema.dimensions());
  for (Index i = 0; i < w.schema.dimensions(); ++i) {
    const Index n = w.schema.attributes[i].size;
    bool simple = true;
    for (const auto& t : w.terms) {
      const auto& b = w.block_for(t, i);
      simple = simple && (std::holds_alternative<TotalBlock>(b) ||
                          std::holds_alternative<IdentityBlock>(b));
    }
    p[i] = simple ? 1 : std::min<Index>(n, (n + 15) / 16);
  }
  return p;
}

}  // namespace hdmm
