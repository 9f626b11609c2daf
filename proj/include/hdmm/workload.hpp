//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hdmm/linop.hpp"
#include "hdmm/types.hpp"

namespace hdmm {

// Attribute domains. `values` / `range` are optional dictionaries used by CSV
// ingestion to map raw cells to domain indices.
struct Attribute {
  std::string name;
  Index size = 0;
  std::vector<std::string> values;            // explicit value list, or
  std::optional<std::pair<long, long>> range; // integer half-open range [lo, hi)
};

struct Schema {
  std::vector<Attribute> attributes;

  Index dimensions() const { return static_cast<Index>(attributes.size()); }
  Index domain_size() const;
  Index attribute_index(const std::string& name) const;  // throws DomainError
  void validate() const;
};

// Per-attribute predicate-set building blocks.
struct IdentityBlock {};
struct TotalBlock {};
struct PrefixBlock {};
struct AllRangeBlock {};
struct RangeWidthBlock {
  Index width = 0;
};
struct PermutedRangeBlock {
  std::uint64_t seed = 0;
};
struct CustomDenseBlock {
  Matrix entries;
};

using BuildingBlock =
    std::variant<IdentityBlock, TotalBlock, PrefixBlock, AllRangeBlock,
                 RangeWidthBlock, PermutedRangeBlock, CustomDenseBlock>;

// One product of per-attribute predicate sets; attributes not mentioned take
// the Total block.
struct ProductTerm {
  double weight = 1.0;
  std::map<std::string, BuildingBlock> blocks;
};

struct LogicalWorkload {
  Schema schema;
  std::vector<ProductTerm> terms;

  void validate() const;
  // The block acting on attribute `i` in `term` (Total when absent).
  const BuildingBlock& block_for(const ProductTerm& term, Index i) const;
  // Total number of queries across all products.
  Index query_count() const;
};

// Explicit vectorization of one building block on a domain of size n.
LinOpPtr vec_block(const BuildingBlock& b, Index n);

// Implicit vectorization: weighted stack over terms of per-attribute Kronecker
// products, in schema order (attribute 0 = slowest-varying index).
LinOpPtr impvec(const LogicalWorkload& w);

// Closed-form W^T W for blocks that support it (falls back to
// gram(vec_block(...)) otherwise).
Matrix gram_closed_form(const BuildingBlock& b, Index n);

// Per-factor Gram summaries consumed by the optimizers.
struct FactorStats {
  double trace = 0.0;       // tr(W_i^T W_i)  ( = ||W_i||_F^2 )
  double sum = 0.0;         // 1^T (W_i^T W_i) 1  ( = ||W_i 1||^2 )
  double sensitivity = 0.0; // ||W_i||_1
  Index rows = 0;
};

FactorStats block_stats(const BuildingBlock& b, Index n);

// stats[term][attribute].
std::vector<std::vector<FactorStats>> workload_stats(const LogicalWorkload& w);

// Dense Gram of one factor (n_i x n_i), used by the strategy optimizers.
Matrix factor_gram(const BuildingBlock& b, Index n);

// Workload generators (deterministic given arguments).
LogicalWorkload all_kway_marginals(const Schema& schema, Index k);
LogicalWorkload up_to_kway_marginals(const Schema& schema, Index k,
                                     bool include_total = false);
LogicalWorkload prefix_product(const Schema& schema);
LogicalWorkload allrange_product(const Schema& schema);
LogicalWorkload range_width_workload(const Schema& schema, Index width);
// All range queries over the flattened domain, composed with a seeded uniform
// permutation of the domain cells; the schema is merged into one attribute.
LogicalWorkload permuted_range(const Schema& schema, std::uint64_t seed);

}  // namespace hdmm
