//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hdmm/optkron.hpp"
#include "hdmm/optmarg.hpp"
#include "hdmm/workload.hpp"

namespace hdmm {

// Explicit count vector over the full domain product, row-major in schema
// order. Negative entries only warn (reconstruction output may be fed back).
struct DataVector {
  Schema schema;
  Vector counts;

  void validate() const;
};

enum class OperatorKind { kKron, kPlus, kMarginals };

struct OperatorSet {
  bool kron = true;
  bool plus = true;
  bool marginals = true;
};

// A selected measurement strategy; the cached operator always has sensitivity
// 1 (within 1e-10), so the Laplace scale is 1/epsilon.
class Strategy {
 public:
  using Impl = std::variant<KronStrategy, UnionStrategy, MarginalsStrategy>;

  explicit Strategy(Impl impl);

  const Impl& impl() const { return impl_; }
  const LinOpPtr& op() const { return op_; }
  Index rows() const { return op_->rows(); }
  Index cols() const { return op_->cols(); }

  // Least squares through the structure: closed-form factor pseudo-inverses
  // for products, the G-basis inverse for marginals, iterative least squares
  // for unions.
  Vector reconstruct(const Eigen::Ref<const Vector>& y) const;

 private:
  Impl impl_;
  LinOpPtr op_;
};

// Identity baseline as a strategy (p = 1, Theta = 0 factors).
Strategy identity_strategy(const Schema& schema);

struct PrivateAnswer {
  Vector noisy_measurements;
  Vector reconstructed;
  Vector workload_answers;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
};

struct HdmmOptions {
  OptKronOptions kron;
  OptMargOptions marginals;
  int threads = 0;
};

struct HdmmSelection {
  Strategy strategy;
  double expected_root_error = 0.0;  // at epsilon = 1
  std::string operator_name;         // "identity", "kron", "plus", "marginals"
};

// Algorithm: run every enabled operator, keep the least-error strategy,
// never worse than Identity. Strategy selection is data independent.
HdmmSelection opt_hdmm(const LogicalWorkload& w, const OperatorSet& operators,
                       int restarts, std::uint64_t seed,
                       const HdmmOptions& options = {});

// Laplace mechanism, vector form: y = A x + Lap(||A||_1 / epsilon)^m from the
// seeded counter-based stream. epsilon >= 1e12 short-circuits to zero noise
// (the documented noiseless-limit switch used by tests and `run`).
Vector measure(const Strategy& strategy, const DataVector& data, double epsilon,
               std::uint64_t seed);

Vector answer(const LogicalWorkload& w, const Eigen::Ref<const Vector>& xbar);

PrivateAnswer run_hdmm(const LogicalWorkload& w, const DataVector& data,
                       double epsilon, const OperatorSet& operators,
                       int restarts, std::uint64_t seed,
                       const HdmmOptions& options = {});

}  // namespace hdmm
