//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "hdmm/workload.hpp"
#include "oracles.hpp"

using namespace hdmm;

namespace {

Schema make_schema(std::initializer_list<std::pair<const char*, Index>> attrs) {
  Schema s;
  for (const auto& [name, size] : attrs)
    s.attributes.push_back({name, size, {}, std::nullopt});
  return s;
}

}  // namespace

TEST_CASE("vec_block shapes and entries") {
  Matrix p3 = materialize(*vec_block(PrefixBlock{}, 3));
  Matrix expected(3, 3);
  expected << 1, 0, 0, 1, 1, 0, 1, 1, 1;
  CHECK(p3.isApprox(expected));

  Matrix r2 = materialize(*vec_block(AllRangeBlock{}, 2));
  std::set<std::vector<double>> rows;
  for (Index i = 0; i < r2.rows(); ++i)
    rows.insert({r2(i, 0), r2(i, 1)});
  CHECK(rows == std::set<std::vector<double>>{{1, 0}, {0, 1}, {1, 1}});

  CHECK(materialize(*vec_block(TotalBlock{}, 4)).isApprox(Matrix::Ones(1, 4)));
  CHECK_THROWS_AS(vec_block(RangeWidthBlock{5}, 3), DomainError);
}

TEST_CASE("impvec compiles products without expanding the domain") {
  // One conjunctive query over (2,2,64,115,17) stores sum(n_i) values.
  Schema s = make_schema({{"a", 2}, {"b", 2}, {"c", 64}, {"d", 115}, {"e", 17}});
  LogicalWorkload w;
  w.schema = s;
  ProductTerm t;
  for (const auto& attr : s.attributes)
    t.blocks[attr.name] = CustomDenseBlock{Matrix::Ones(1, attr.size)};
  w.terms.push_back(t);
  auto op = impvec(w);
  CHECK(op->rows() == 1);
  CHECK(op->cols() == 2 * 2 * 64 * 115 * 17);
  // Kron encoding stores 2+2+64+115+17 = 200 values.
  Index stored = 0;
  for (const auto& attr : s.attributes) stored += attr.size;
  CHECK(stored == 200);

  // sex = M AND age < 5 as a product of two one-row factors.
  Schema sa = make_schema({{"sex", 2}, {"age", 115}});
  LogicalWorkload q;
  q.schema = sa;
  ProductTerm qt;
  Matrix sex_row(1, 2), age_row(1, 115);
  sex_row << 1, 0;
  age_row.setZero();
  age_row.leftCols(5).setOnes();
  qt.blocks["sex"] = CustomDenseBlock{sex_row};
  qt.blocks["age"] = CustomDenseBlock{age_row};
  q.terms.push_back(qt);
  auto qop = impvec(q);
  CHECK(qop->rows() == 1);
  CHECK(qop->cols() == 230);

  // Single-attribute identity workload compiles to Identity(n).
  LogicalWorkload idw;
  idw.schema = make_schema({{"x", 6}});
  ProductTerm idt;
  idt.blocks["x"] = IdentityBlock{};
  idw.terms.push_back(idt);
  CHECK(impvec(idw)->kind() == OpKind::kIdentity);
}

TEST_CASE("impvec row set matches brute-force enumeration") {
  Schema s = make_schema({{"a", 2}, {"b", 3}});
  LogicalWorkload w;
  w.schema = s;
  ProductTerm t1, t2;
  t1.blocks["a"] = IdentityBlock{};
  t1.blocks["b"] = PrefixBlock{};
  t2.blocks["b"] = IdentityBlock{};
  w.terms = {t1, t2};
  Matrix e = materialize(*impvec(w));

  // Brute force: per-term Kronecker of explicit factors, stacked in order.
  Matrix t1e = oracle::kron(Matrix::Identity(2, 2),
                            materialize(*vec_block(PrefixBlock{}, 3)));
  Matrix t2e = oracle::kron(Matrix::Ones(1, 2), Matrix::Identity(3, 3));
  CHECK(e.rows() == t1e.rows() + t2e.rows());
  CHECK(e.topRows(t1e.rows()) == t1e);
  CHECK(e.bottomRows(t2e.rows()) == t2e);
}

TEST_CASE("gram closed form agrees with explicit grams") {
  Matrix p3 = gram_closed_form(PrefixBlock{}, 3);
  Matrix expected(3, 3);
  expected << 3, 2, 1, 2, 2, 1, 1, 1, 1;
  CHECK(p3 == expected);

  Matrix r2 = gram_closed_form(AllRangeBlock{}, 2);
  Matrix r2e(2, 2);
  r2e << 2, 1, 1, 2;
  CHECK(r2 == r2e);

  CHECK(gram_closed_form(PrefixBlock{}, 1) == Matrix::Ones(1, 1));

  for (Index n : {2, 16, 64, 512}) {
    for (BuildingBlock b :
         {BuildingBlock{PrefixBlock{}}, BuildingBlock{AllRangeBlock{}}}) {
      Matrix closed = gram_closed_form(b, n);
      Matrix e = materialize(*vec_block(b, n),
                             std::numeric_limits<Index>::max());
      CHECK(closed.isApprox(e.transpose() * e, 1e-12));
    }
  }
}

TEST_CASE("workload stats") {
  CHECK(block_stats(IdentityBlock{}, 5).trace == 5);
  CHECK(block_stats(IdentityBlock{}, 5).sum == 5);
  CHECK(block_stats(TotalBlock{}, 5).trace == 5);
  CHECK(block_stats(TotalBlock{}, 5).sum == 25);
  CHECK(block_stats(PrefixBlock{}, 3).trace == 6);
  CHECK(block_stats(PrefixBlock{}, 3).sum == 14);

  // Generic agreement with dense trace/sum.
  for (BuildingBlock b :
       {BuildingBlock{PrefixBlock{}}, BuildingBlock{AllRangeBlock{}},
        BuildingBlock{RangeWidthBlock{3}}, BuildingBlock{PermutedRangeBlock{5}}}) {
    const Index n = 7;
    Matrix e = materialize(*vec_block(b, n));
    Matrix g = e.transpose() * e;
    FactorStats fs = block_stats(b, n);
    CHECK(fs.trace == doctest::Approx(g.trace()));
    CHECK(fs.sum == doctest::Approx(g.sum()));
    CHECK(fs.sensitivity == doctest::Approx(oracle::max_col_l1(e)));
    CHECK(fs.rows == e.rows());
  }
}

TEST_CASE("marginals generators") {
  Schema s2 = make_schema({{"a", 3}, {"b", 4}});
  LogicalWorkload k1 = up_to_kway_marginals(s2, 1);
  CHECK(k1.terms.size() == 2);
  CHECK(k1.terms[0].blocks.size() == 1);

  LogicalWorkload k1t = up_to_kway_marginals(s2, 1, /*include_total=*/true);
  CHECK(k1t.terms.size() == 3);
  CHECK(k1t.terms[0].blocks.empty());

  LogicalWorkload full = all_kway_marginals(s2, 2);
  CHECK(full.terms.size() == 1);
  CHECK(impvec(full)->rows() == 12);  // the full contingency table

  CHECK_THROWS_AS(up_to_kway_marginals(s2, 3), DomainError);

  Schema s3 = make_schema({{"a", 2}, {"b", 2}, {"c", 2}});
  CHECK(up_to_kway_marginals(s3, 2).terms.size() == 3 + 3);
  CHECK(all_kway_marginals(s3, 2).terms.size() == 3);
}

TEST_CASE("product generators") {
  Schema s = make_schema({{"x", 4}, {"y", 4}});
  LogicalWorkload pp = prefix_product(s);
  CHECK(pp.terms.size() == 1);
  Matrix e = materialize(*impvec(pp));
  Matrix p4 = materialize(*vec_block(PrefixBlock{}, 4));
  CHECK(e.isApprox(oracle::kron(p4, p4)));
}

TEST_CASE("permuted range is a column permutation of all ranges") {
  Schema s = make_schema({{"x", 3}, {"y", 2}});
  LogicalWorkload w = permuted_range(s, 12345);
  CHECK(w.schema.attributes.size() == 1);
  CHECK(w.schema.domain_size() == 6);
  Matrix e = materialize(*impvec(w));
  Matrix r = materialize(*all_range_queries(6));
  // Same multiset of columns, same Frobenius norm.
  CHECK(e.squaredNorm() == doctest::Approx(r.squaredNorm()));
  // Determinism.
  Matrix e2 = materialize(*impvec(permuted_range(s, 12345)));
  CHECK(e == e2);
  Matrix e3 = materialize(*impvec(permuted_range(s, 999)));
  CHECK(e != e3);
}

TEST_CASE("workload validation") {
  Schema s = make_schema({{"a", 2}});
  LogicalWorkload w;
  w.schema = s;
  CHECK_THROWS_AS(w.validate(), DomainError);  // no terms
  ProductTerm t;
  t.weight = -1.0;
  w.terms.push_back(t);
  CHECK_THROWS_AS(w.validate(), DomainError);  // bad weight
  w.terms[0].weight = 1.0;
  w.terms[0].blocks["missing"] = IdentityBlock{};
  CHECK_THROWS_AS(w.validate(), DomainError);  // unknown attribute
}
