//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hdmm/error_analysis.hpp"
#include "oracles.hpp"

using namespace hdmm;

namespace {

Schema make_schema(std::vector<Index> sizes) {
  Schema s;
  for (std::size_t i = 0; i < sizes.size(); ++i)
    s.attributes.push_back({"a" + std::to_string(i), sizes[i], {}, std::nullopt});
  return s;
}

LogicalWorkload single_block(const Schema& s, BuildingBlock b) {
  LogicalWorkload w;
  w.schema = s;
  ProductTerm t;
  for (const auto& a : s.attributes) t.blocks[a.name] = b;
  w.terms.push_back(t);
  return w;
}

}  // namespace

TEST_CASE("expected error hand computations") {
  // W = [1 1], A = I2, eps = 1: (2/1) * 1 * (1 + 1) = 4.
  Schema s = make_schema({2});
  LogicalWorkload w = single_block(s, TotalBlock{});
  Strategy ident = identity_strategy(s);
  CHECK(expected_error(w, ident, 1.0) == doctest::Approx(4.0));

  // A = W = Identity(n): 2n at eps = 1.
  LogicalWorkload wi = single_block(make_schema({7}), IdentityBlock{});
  Strategy ident7 = identity_strategy(make_schema({7}));
  CHECK(expected_error(wi, ident7, 1.0) == doctest::Approx(14.0));

  // Doubling epsilon divides the error by four.
  CHECK(expected_error(wi, ident7, 2.0) == doctest::Approx(14.0 / 4.0));
  CHECK_THROWS_AS(expected_error(wi, ident7, 0.0), DomainError);
}

TEST_CASE("identity baseline error") {
  CHECK(identity_error(single_block(make_schema({9}), TotalBlock{}), 1.0) ==
        doctest::Approx(2.0 * 9.0));
  CHECK(identity_error(single_block(make_schema({9}), IdentityBlock{}), 1.0) ==
        doctest::Approx(2.0 * 9.0));
  // Prefix(3): ||P||_F^2 = 6 -> 12 / eps^2.
  CHECK(identity_error(single_block(make_schema({3}), PrefixBlock{}), 2.0) ==
        doctest::Approx(12.0 / 4.0));
}

TEST_CASE("laplace mechanism baseline error") {
  CHECK(lm_error(single_block(make_schema({9}), TotalBlock{}), 1.0) ==
        doctest::Approx(2.0));
  CHECK(lm_error(single_block(make_schema({9}), IdentityBlock{}), 1.0) ==
        doctest::Approx(2.0 * 9.0));
  // Prefix(n): ||W||_1 = n, m = n -> 2 n^3 / eps^2.
  CHECK(lm_error(single_block(make_schema({5}), PrefixBlock{}), 1.0) ==
        doctest::Approx(2.0 * 125.0));
}

TEST_CASE("ratios") {
  CHECK(error_ratio(4.0, 4.0) == 1.0);
  CHECK(error_ratio(16.0, 4.0) == 2.0);
  CHECK_THROWS_AS(error_ratio(1.0, 0.0), DomainError);

  // Epsilon independence.
  LogicalWorkload w = single_block(make_schema({32}), PrefixBlock{});
  HdmmSelection sel = opt_hdmm(w, {}, 2, 3);
  double r_prev = 0.0;
  for (double eps : {0.1, 1.0, 10.0}) {
    const double r = error_ratio(identity_error(w, eps),
                                 expected_error(w, sel.strategy, eps));
    if (r_prev != 0.0) CHECK(r == doctest::Approx(r_prev).epsilon(1e-12));
    r_prev = r;
  }
}

TEST_CASE("expected error of the identity strategy equals the baseline") {
  for (auto& w : {single_block(make_schema({12}), PrefixBlock{}),
                  up_to_kway_marginals(make_schema({3, 4, 2}), 2, true)}) {
    Strategy ident = identity_strategy(w.schema);
    CHECK(expected_error(w, ident, 1.0) ==
          doctest::Approx(identity_error(w, 1.0)).epsilon(1e-10));
  }
}

TEST_CASE("closed forms match dense oracles") {
  std::mt19937_64 rng(41);
  // Kron strategy on a product workload.
  Schema s = make_schema({6, 5});
  LogicalWorkload w = single_block(s, PrefixBlock{});
  KronStrategy ks;
  ks.factors = {{oracle::random_matrix(rng, 2, 6)},
                {oracle::random_matrix(rng, 2, 5)}};
  Strategy strat{ks};
  Matrix wm = materialize(*impvec(w));
  Matrix am = materialize(*strat.op());
  CHECK(expected_error(w, strat, 1.0) ==
        doctest::Approx(2.0 * oracle::strategy_error(wm, am)).epsilon(1e-8));

  // Union strategy error is evaluated exactly on a small domain.
  UnionStrategy us;
  us.terms.push_back({0.5, ks});
  KronStrategy ks2;
  ks2.factors = {{oracle::random_matrix(rng, 1, 6)},
                 {oracle::random_matrix(rng, 1, 5)}};
  us.terms.push_back({0.5, ks2});
  Strategy ustrat{us};
  Matrix um = materialize(*ustrat.op());
  CHECK(expected_error(w, ustrat, 1.0) ==
        doctest::Approx(2.0 * oracle::strategy_error(wm, um)).epsilon(1e-8));

  // Identity and LM baselines against dense computations.
  CHECK(identity_error(w, 1.0) ==
        doctest::Approx(2.0 * wm.squaredNorm()).epsilon(1e-10));
  const double sens = oracle::max_col_l1(wm);
  CHECK(lm_error(w, 1.0) ==
        doctest::Approx(2.0 * sens * sens * wm.rows()).epsilon(1e-10));
}

TEST_CASE("error report structure") {
  LogicalWorkload w = single_block(make_schema({16}), PrefixBlock{});
  HdmmSelection sel = opt_hdmm(w, {}, 2, 7);
  ErrorReport rep = make_error_report(w, sel.strategy, "hdmm", 1.0, "test");
  REQUIRE(rep.strategies.size() == 3);
  CHECK(rep.strategies[0].ratio_vs_hdmm == 1.0);
  CHECK(rep.strategies[1].name == "identity");
  CHECK(rep.strategies[2].name == "lm");
  CHECK(rep.strategies[1].ratio_vs_hdmm >= 1.0);
  const std::string table = format_error_table(rep);
  CHECK(table.find("identity") != std::string::npos);
}
