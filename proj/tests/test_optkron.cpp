//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "hdmm/optkron.hpp"
#include "oracles.hpp"

using namespace hdmm;

namespace {

Schema make_schema(std::initializer_list<std::pair<const char*, Index>> attrs) {
  Schema s;
  for (const auto& [name, size] : attrs)
    s.attributes.push_back({name, size, {}, std::nullopt});
  return s;
}

KronStrategy random_strategy(std::mt19937_64& rng, const Schema& schema,
                             Index p) {
  KronStrategy s;
  for (const auto& a : schema.attributes)
    s.factors.push_back({oracle::random_matrix(rng, p, a.size, 0.05, 1.0)});
  return s;
}

LogicalWorkload identity_total_union(const Schema& s) {
  // W = I (x) T + T (x) I with unit weights.
  LogicalWorkload w;
  w.schema = s;
  ProductTerm t1, t2;
  t1.blocks[s.attributes[0].name] = IdentityBlock{};
  t2.blocks[s.attributes[1].name] = IdentityBlock{};
  w.terms = {t1, t2};
  return w;
}

}  // namespace

TEST_CASE("union_error against hand computation") {
  Schema s = make_schema({{"a", 2}, {"b", 2}});
  LogicalWorkload w = identity_total_union(s);
  KronStrategy eye;
  eye.factors = {{Matrix::Zero(1, 2)}, {Matrix::Zero(1, 2)}};
  // ||W A^+||_F^2 for A = I: each term contributes 2 * 2.
  CHECK(union_error(w, eye) == doctest::Approx(8.0));
}

TEST_CASE("single term single attribute equals the opt0 objective") {
  Schema s = make_schema({{"x", 8}});
  LogicalWorkload w = prefix_product(s);
  std::mt19937_64 rng(3);
  KronStrategy strat = random_strategy(rng, s, 2);
  CHECK(union_error(w, strat) ==
        doctest::Approx(pid_objective(strat.factors[0].theta,
                                      gram_closed_form(PrefixBlock{}, 8))));
}

TEST_CASE("error decomposition matches the dense oracle") {
  std::mt19937_64 rng(17);
  Schema s = make_schema({{"a", 8}, {"b", 8}});
  LogicalWorkload w = prefix_product(s);
  for (int trial = 0; trial < 5; ++trial) {
    KronStrategy strat = random_strategy(rng, s, 2);
    Matrix wm = materialize(*impvec(w));
    Matrix am = materialize(*strat.to_linop());
    CHECK(union_error(w, strat) ==
          doctest::Approx(oracle::strategy_error(wm, am)).epsilon(1e-8));
  }
}

TEST_CASE("union error of a union workload matches the dense oracle") {
  std::mt19937_64 rng(23);
  Schema s = make_schema({{"a", 4}, {"b", 5}});
  LogicalWorkload w = identity_total_union(s);
  w.terms[0].weight = 1.5;
  w.terms[1].weight = 0.5;
  for (int trial = 0; trial < 5; ++trial) {
    KronStrategy strat = random_strategy(rng, s, 2);
    Matrix wm = materialize(*impvec(w));
    Matrix am = materialize(*strat.to_linop());
    CHECK(union_error(w, strat) ==
          doctest::Approx(oracle::strategy_error(wm, am)).epsilon(1e-8));
  }
}

TEST_CASE("surrogate gram") {
  Schema s = make_schema({{"a", 4}, {"b", 6}});
  std::mt19937_64 rng(29);

  // k = 1: constant factor only.
  LogicalWorkload pp = prefix_product(s);
  KronStrategy strat = random_strategy(rng, s, 2);
  Matrix sg = surrogate_gram(pp, strat, 0);
  const double other = pid_objective(strat.factors[1].theta,
                                     gram_closed_form(PrefixBlock{}, 6));
  CHECK(sg.isApprox(Matrix(other * gram_closed_form(PrefixBlock{}, 4)), 1e-12));

  // Two identical terms with unit weights double the surrogate.
  LogicalWorkload twice = pp;
  twice.terms.push_back(twice.terms[0]);
  Matrix sg2 = surrogate_gram(twice, strat, 0);
  CHECK(sg2.isApprox(Matrix(2.0 * sg), 1e-12));

  // Optimizing a factor on its surrogate reduces the union error.
  LogicalWorkload u = identity_total_union(s);
  u.terms[0].blocks["b"] = PrefixBlock{};  // make it less trivial
  KronStrategy cur = random_strategy(rng, s, 2);
  double err = union_error(u, cur);
  for (int sweep = 0; sweep < 3; ++sweep) {
    for (Index i = 0; i < 2; ++i) {
      Matrix g = surrogate_gram(u, cur, i);
      cur.factors[i].theta = opt0_minimize(cur.factors[i].theta, g).params.theta;
      const double next = union_error(u, cur);
      CHECK(next <= err + 1e-9 * err);
      err = next;
    }
  }
}

TEST_CASE("opt_kron single attribute reduces to opt0") {
  Schema s = make_schema({{"x", 16}});
  LogicalWorkload w = prefix_product(s);
  auto kr = opt_kron(w, {2}, 3, 11);
  auto direct = opt0(gram_closed_form(PrefixBlock{}, 16), 2, 3, 11);
  // Same seeded restarts, same surrogate (k = 1, d = 1): identical objective.
  CHECK(kr.error == doctest::Approx(direct.objective).epsilon(1e-9));
}

TEST_CASE("opt_kron block descent is monotone across sweeps") {
  Schema s = make_schema({{"a", 8}, {"b", 8}});
  LogicalWorkload w = identity_total_union(s);
  w.terms[0].blocks["b"] = PrefixBlock{};
  auto kr = opt_kron(w, {2, 2}, 2, 5);
  REQUIRE(kr.sweep_trace.size() > 1);
  for (std::size_t i = 1; i < kr.sweep_trace.size(); ++i)
    CHECK(kr.sweep_trace[i] <= kr.sweep_trace[i - 1] * (1.0 + 1e-9));
}

TEST_CASE("opt_kron on T x T approaches the analytic optimum") {
  Schema s = make_schema({{"a", 4}, {"b", 4}});
  LogicalWorkload w;
  w.schema = s;
  w.terms.push_back(ProductTerm{1.0, {}});  // all-Total product
  auto kr = opt_kron(w, {1, 1}, 5, 3);
  CHECK(kr.error <= 1.1);  // optimum 1 = product of per-factor optima
}

TEST_CASE("default partition groups by support pattern") {
  Schema s = make_schema({{"a", 4}, {"b", 4}});
  LogicalWorkload rt_tr;
  rt_tr.schema = s;
  ProductTerm t1, t2;
  t1.blocks["a"] = AllRangeBlock{};
  t2.blocks["b"] = AllRangeBlock{};
  rt_tr.terms = {t1, t2};
  auto part = default_partition(rt_tr);
  REQUIRE(part.size() == 2);
  CHECK(part[0].size() == 1);
  CHECK(part[1].size() == 1);

  LogicalWorkload same = prefix_product(s);
  same.terms.push_back(same.terms[0]);
  CHECK(default_partition(same).size() == 1);

  // Three patterns merge into exactly two groups (smaller two together).
  LogicalWorkload three = rt_tr;
  ProductTerm t3;
  t3.blocks["a"] = IdentityBlock{};
  t3.blocks["b"] = IdentityBlock{};
  three.terms.push_back(t3);
  auto merged = default_partition(three);
  CHECK(merged.size() == 2);
  Index covered = 0;
  for (const auto& g : merged) covered += static_cast<Index>(g.size());
  CHECK(covered == 3);
}

TEST_CASE("opt_plus") {
  Schema s = make_schema({{"a", 16}, {"b", 16}});
  LogicalWorkload w;
  w.schema = s;
  ProductTerm t1, t2;
  t1.blocks["a"] = AllRangeBlock{};
  t2.blocks["b"] = AllRangeBlock{};
  w.terms = {t1, t2};

  auto part = default_partition(w);
  auto plus = opt_plus(w, part, {2, 2}, 3, 21);
  REQUIRE(plus.strategy.terms.size() == 2);
  CHECK(plus.strategy.terms[0].budget_share == doctest::Approx(0.5));

  // Stacked strategy sensitivity is exactly 1.
  CHECK(plus.strategy.to_linop()->sensitivity() ==
        doctest::Approx(1.0).epsilon(1e-12));

  // The union beats the best single-product strategy on this workload
  // (dense oracle at N = 256).
  auto single = opt_kron(w, {2, 2}, 3, 21);
  Matrix wm = materialize(*impvec(w));
  Matrix um = materialize(*plus.strategy.to_linop());
  Matrix sm = materialize(*single.strategy.to_linop());
  const double union_exact = oracle::strategy_error(wm, um);
  const double single_exact = oracle::strategy_error(wm, sm);
  CHECK(union_exact <= single_exact);

  // Single group reduces to opt_kron, budget share 1.
  auto one = opt_plus(w, {{0, 1}}, {2, 2}, 2, 9);
  auto direct = opt_kron(w, {2, 2}, 2, 9);
  CHECK(one.strategy.terms.size() == 1);
  CHECK(one.strategy.terms[0].budget_share == 1.0);
  CHECK(one.error == doctest::Approx(direct.error).epsilon(1e-12));

  CHECK_THROWS_AS(opt_plus(w, {{0}}, {2, 2}, 2, 9, {}), DomainError);
  CHECK_THROWS_AS(opt_plus(w, {{0}, {0, 1}}, {2, 2}, 2, 9, {}), DomainError);
}

TEST_CASE("opt_plus with one group per term on 2-way marginals") {
  Schema s = make_schema({{"a", 3}, {"b", 3}, {"c", 3}});
  LogicalWorkload w;
  w.schema = s;
  ProductTerm ab, ac, bc;
  ab.blocks["a"] = IdentityBlock{};
  ab.blocks["b"] = IdentityBlock{};
  ac.blocks["a"] = IdentityBlock{};
  ac.blocks["c"] = IdentityBlock{};
  bc.blocks["b"] = IdentityBlock{};
  bc.blocks["c"] = IdentityBlock{};
  w.terms = {ab, ac, bc};

  auto plus = opt_plus(w, {{0}, {1}, {2}}, {1, 1, 1}, 3, 77);
  REQUIRE(plus.strategy.terms.size() == 3);

  // Each product is identity-like on its pair: the pair factors put nearly
  // all their column mass on the identity block.
  const std::vector<std::pair<int, int>> pairs = {{0, 1}, {0, 2}, {1, 2}};
  for (int g = 0; g < 3; ++g) {
    for (int i : {pairs[g].first, pairs[g].second}) {
      const Matrix& theta = plus.strategy.terms[g].strategy.factors[i].theta;
      CHECK(theta.maxCoeff() < 0.25);  // identity rows dominate the columns
    }
  }

  // Per-group closed form is an upper bound on the exact stacked error.
  Matrix wm = materialize(*impvec(w));
  Matrix um = materialize(*plus.strategy.to_linop());
  CHECK(oracle::strategy_error(wm, um) <= plus.error * (1.0 + 1e-9));
}

TEST_CASE("default p") {
  Schema s = make_schema({{"a", 64}, {"b", 64}});
  LogicalWorkload marg = identity_total_union(s);
  CHECK(default_p(marg) == std::vector<Index>{1, 1});
  LogicalWorkload pp = prefix_product(s);
  CHECK(default_p(pp) == std::vector<Index>{4, 4});
}
