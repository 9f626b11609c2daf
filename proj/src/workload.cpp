//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hdmm/workload.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "hdmm/rng.hpp"

namespace hdmm {

namespace {

const BuildingBlock kTotal = TotalBlock{};

std::vector<Index> seeded_permutation(Index n, std::uint64_t seed) {
  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed, /*stream=*/0x9e37);
  // Fisher-Yates with draws from the counter-based stream.
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.uniform() * static_cast<double>(i + 1));
    std::swap(perm[i], perm[std::min(j, i)]);
  }
  return perm;
}

}  // namespace

Index Schema::domain_size() const {
  Index n = 1;
  for (const auto& a : attributes) n *= a.size;
  return n;
}

Index Schema::attribute_index(const std::string& name) const {
  for (std::size_t i = 0; i < attributes.size(); ++i)
    if (attributes[i].name == name) return static_cast<Index>(i);
  throw DomainError("schema: unknown attribute '" + name + "'");
}

void Schema::validate() const {
  if (attributes.empty()) throw DomainError("schema: no attributes");
  std::set<std::string> names;
  for (const auto& a : attributes) {
    if (a.size < 1)
      throw DomainError("schema: attribute '" + a.name + "' has size < 1");
    if (!names.insert(a.name).second)
      throw DomainError("schema: duplicate attribute '" + a.name + "'");
    if (!a.values.empty() && static_cast<Index>(a.values.size()) != a.size)
      throw DomainError("schema: value list length mismatch for '" + a.name + "'");
    if (a.range && a.range->second - a.range->first != a.size)
      throw DomainError("schema: range width mismatch for '" + a.name + "'");
  }
}

void LogicalWorkload::validate() const {
  schema.validate();
  if (terms.empty()) throw DomainError("workload: no terms");
  for (const auto& t : terms) {
    if (!(t.weight > 0.0) || !std::isfinite(t.weight))
      throw DomainError("workload: term weights must be positive and finite");
    for (const auto& [name, block] : t.blocks) {
      const Index i = schema.attribute_index(name);
      // vec_block validates block/size compatibility.
      vec_block(block, schema.attributes[i].size);
    }
  }
}

const BuildingBlock& LogicalWorkload::block_for(const ProductTerm& term,
                                                Index i) const {
  auto it = term.blocks.find(schema.attributes[i].name);
  return it == term.blocks.end() ? kTotal : it->second;
}

Index LogicalWorkload::query_count() const {
  Index total = 0;
  for (const auto& t : terms) {
    Index rows = 1;
    for (Index i = 0; i < schema.dimensions(); ++i)
      rows *= block_stats(block_for(t, i), schema.attributes[i].size).rows;
    total += rows;
  }
  return total;
}

LinOpPtr vec_block(const BuildingBlock& b, Index n) {
  return std::visit(
      [n](const auto& block) -> LinOpPtr {
        using T = std::decay_t<decltype(block)>;
        if constexpr (std::is_same_v<T, IdentityBlock>) {
          return identity(n);
        } else if constexpr (std::is_same_v<T, TotalBlock>) {
          return ones(1, n);
        } else if constexpr (std::is_same_v<T, PrefixBlock>) {
          return prefix_queries(n);
        } else if constexpr (std::is_same_v<T, AllRangeBlock>) {
          return all_range_queries(n);
        } else if constexpr (std::is_same_v<T, RangeWidthBlock>) {
          if (block.width > n)
            throw DomainError("range_width block wider than the attribute");
          return range_width_queries(block.width, n);
        } else if constexpr (std::is_same_v<T, PermutedRangeBlock>) {
          return col_permuted(all_range_queries(n),
                              seeded_permutation(n, block.seed));
        } else {
          if (block.entries.cols() != n)
            throw DomainError("dense block column count must match the attribute");
          return dense(block.entries);
        }
      },
      b);
}

LinOpPtr impvec(const LogicalWorkload& w) {
  w.validate();
  std::vector<std::pair<double, LinOpPtr>> terms;
  terms.reserve(w.terms.size());
  for (const auto& t : w.terms) {
    std::vector<LinOpPtr> factors;
    factors.reserve(w.schema.dimensions());
    for (Index i = 0; i < w.schema.dimensions(); ++i)
      factors.push_back(vec_block(w.block_for(t, i), w.schema.attributes[i].size));
    terms.emplace_back(t.weight, kron(std::move(factors)));
  }
  return stack(std::move(terms));
}

Matrix gram_closed_form(const BuildingBlock& b, Index n) {
  constexpr Index unguarded = std::numeric_limits<Index>::max();
  return vec_block(b, n)->gram(unguarded)->materialize(unguarded);
}

FactorStats block_stats(const BuildingBlock& b, Index n) {
  const double dn = static_cast<double>(n);
  FactorStats s;
  if (std::holds_alternative<IdentityBlock>(b)) {
    s = {dn, dn, 1.0, n};
  } else if (std::holds_alternative<TotalBlock>(b)) {
    s = {dn, dn * dn, 1.0, 1};
  } else if (std::holds_alternative<PrefixBlock>(b)) {
    double sum = 0.0;
    for (Index k = 0; k < n; ++k) sum += static_cast<double>((n - k) * (2 * k + 1));
    s = {dn * (dn + 1.0) / 2.0, sum, dn, n};
  } else if (std::holds_alternative<AllRangeBlock>(b) ||
             std::holds_alternative<PermutedRangeBlock>(b)) {
    // trace = sum over ranges of length, sum = sum of squared lengths;
    // both are invariant under domain permutation.
    double tr = 0.0, sum = 0.0;
    for (Index l = 1; l <= n; ++l) {
      tr += static_cast<double>(l * (n - l + 1));
      sum += static_cast<double>(l) * static_cast<double>(l) *
             static_cast<double>(n - l + 1);
    }
    double sens = 0.0;
    for (Index k = 0; k < n; ++k)
      sens = std::max(sens, static_cast<double>((k + 1) * (n - k)));
    s = {tr, sum, sens, n * (n + 1) / 2};
  } else if (const auto* rw = std::get_if<RangeWidthBlock>(&b)) {
    const Index m = n - rw->width + 1;
    const double w = static_cast<double>(rw->width);
    const LinOpPtr op = vec_block(b, n);
    s = {static_cast<double>(m) * w, static_cast<double>(m) * w * w,
         op->sensitivity(), m};
  } else {
    const auto& e = std::get<CustomDenseBlock>(b).entries;
    if (e.cols() != n)
      throw DomainError("dense block column count must match the attribute");
    Matrix g = e.transpose() * e;
    s = {g.trace(), g.sum(), e.cwiseAbs().colwise().sum().maxCoeff(), e.rows()};
  }
  return s;
}

std::vector<std::vector<FactorStats>> workload_stats(const LogicalWorkload& w) {
  std::vector<std::vector<FactorStats>> stats;
  stats.reserve(w.terms.size());
  for (const auto& t : w.terms) {
    std::vector<FactorStats> per_attr;
    per_attr.reserve(w.schema.dimensions());
    for (Index i = 0; i < w.schema.dimensions(); ++i)
      per_attr.push_back(block_stats(w.block_for(t, i), w.schema.attributes[i].size));
    stats.push_back(std::move(per_attr));
  }
  return stats;
}

Matrix factor_gram(const BuildingBlock& b, Index n) {
  return gram_closed_form(b, n);
}

namespace {

LogicalWorkload marginals_for_sizes(const Schema& schema,
                                    const std::vector<Index>& sizes,
                                    bool include_total) {
  LogicalWorkload w;
  w.schema = schema;
  const Index d = schema.dimensions();
  if (include_total) w.terms.push_back(ProductTerm{1.0, {}});
  for (Index k : sizes) {
    // Enumerate all k-subsets of attributes in lexicographic order.
    std::vector<Index> idx(k);
    std::iota(idx.begin(), idx.end(), Index{0});
    while (true) {
      ProductTerm t;
      t.weight = 1.0;
      for (Index i : idx) t.blocks[schema.attributes[i].name] = IdentityBlock{};
      w.terms.push_back(std::move(t));
      Index pos = k - 1;
      while (pos >= 0 && idx[pos] == d - k + pos) --pos;
      if (pos < 0) break;
      ++idx[pos];
      for (Index q = pos + 1; q < k; ++q) idx[q] = idx[q - 1] + 1;
    }
  }
  return w;
}

}  // namespace

LogicalWorkload all_kway_marginals(const Schema& schema, Index k) {
  schema.validate();
  if (k > schema.dimensions()) throw DomainError("marginals: k exceeds dimensions");
  if (k == 0) return marginals_for_sizes(schema, {}, true);
  return marginals_for_sizes(schema, {k}, false);
}

LogicalWorkload up_to_kway_marginals(const Schema& schema, Index k,
                                     bool include_total) {
  schema.validate();
  if (k > schema.dimensions() || k < 1)
    throw DomainError("marginals: k must be in [1, d]");
  std::vector<Index> sizes(k);
  std::iota(sizes.begin(), sizes.end(), Index{1});
  return marginals_for_sizes(schema, sizes, include_total);
}

namespace {

LogicalWorkload uniform_block_workload(const Schema& schema, BuildingBlock b) {
  schema.validate();
  LogicalWorkload w;
  w.schema = schema;
  ProductTerm t;
  t.weight = 1.0;
  for (const auto& a : schema.attributes) t.blocks[a.name] = b;
  w.terms.push_back(std::move(t));
  return w;
}

}  // namespace

LogicalWorkload prefix_product(const Schema& schema) {
  return uniform_block_workload(schema, PrefixBlock{});
}

LogicalWorkload allrange_product(const Schema& schema) {
  return uniform_block_workload(schema, AllRangeBlock{});
}

LogicalWorkload range_width_workload(const Schema& schema, Index width) {
  return uniform_block_workload(schema, RangeWidthBlock{width});
}

LogicalWorkload permuted_range(const Schema& schema, std::uint64_t seed) {
  schema.validate();
  LogicalWorkload w;
  w.schema.attributes.push_back(
      Attribute{"merged", schema.domain_size(), {}, std::nullopt});
  ProductTerm t;
  t.weight = 1.0;
  t.blocks["merged"] = PermutedRangeBlock{seed};
  w.terms.push_back(std::move(t));
  return w;
}

}  // namespace hdmm
