//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "hdmm/types.hpp"

namespace hdmm {

// Tree-structured linear operators. Values are immutable after construction
// and safe to share across threads; every operation is a pure function of the
// operand and its inputs. Kronecker nodes are never materialized: a matvec
// over d factors costs O(d n^{d+1}) instead of O(n^{2d}).

enum class OpKind {
  kDense,
  kIdentity,
  kOnes,
  kPrefix,
  kAllRange,
  kRangeWidth,
  kColPermuted,
  kKron,
  kStack,
  kPIdentity,
  kMarginalsGram,
};

class LinOp;
using LinOpPtr = std::shared_ptr<const LinOp>;

class LinOp {
 public:
  virtual ~LinOp() = default;

  Index rows() const { return shape_.rows; }
  Index cols() const { return shape_.cols; }
  Shape shape() const { return shape_; }
  virtual OpKind kind() const = 0;

  // M * X for a dense block X with cols() rows.
  virtual Matrix apply(const Eigen::Ref<const Matrix>& x) const = 0;
  // M^T * Y for a dense block Y with rows() rows.
  virtual Matrix apply_t(const Eigen::Ref<const Matrix>& y) const = 0;

  // Maximum absolute column sum ||M||_1 (the L1 sensitivity).
  virtual double sensitivity() const = 0;

  // M^T M as an implicit operator; dense intermediates respect `entry_cap`.
  virtual LinOpPtr gram(Index entry_cap = kDenseEntryCap) const;

  // M^+ * Y, defined where the operator has full column rank.
  virtual Matrix pinv_apply(const Eigen::Ref<const Matrix>& y) const;

  // Explicit matrix; guarded by the entry cap (tests and small domains only).
  virtual Matrix materialize(Index entry_cap = kDenseEntryCap) const;

 protected:
  explicit LinOp(Shape s) : shape_(s) {}
  Shape shape_;
};

// Leaf and node constructors.
LinOpPtr dense(Matrix entries);
LinOpPtr identity(Index n);
LinOpPtr ones(Index rows, Index cols);
LinOpPtr prefix_queries(Index n);       // lower-triangular all-ones
LinOpPtr all_range_queries(Index n);    // one row per interval [i, j]
LinOpPtr range_width_queries(Index width, Index n);
// inner * P where P permutes domain cells: column j of the result is column
// perm[j] of inner.
LinOpPtr col_permuted(LinOpPtr inner, std::vector<Index> perm);
LinOpPtr kron(std::vector<LinOpPtr> factors);
LinOpPtr stack(std::vector<std::pair<double, LinOpPtr>> terms);
LinOpPtr p_identity(Matrix theta);
LinOpPtr marginals_gram(Vector weights, std::vector<Index> domain);

// Vector-argument conveniences over the matrix-block interface.
Vector matvec(const LinOp& m, const Eigen::Ref<const Vector>& x);
Vector rmatvec(const LinOp& m, const Eigen::Ref<const Vector>& y);
Vector pinv_apply(const LinOp& m, const Eigen::Ref<const Vector>& y);
inline LinOpPtr gram(const LinOpPtr& m, Index entry_cap = kDenseEntryCap) {
  return m->gram(entry_cap);
}
inline double sensitivity(const LinOp& m) { return m.sensitivity(); }
inline Matrix materialize(const LinOp& m, Index entry_cap = kDenseEntryCap) {
  return m.materialize(entry_cap);
}

struct LstsqResult {
  Vector x;
  Index iterations = 0;
  bool converged = false;
  double residual = 0.0;  // final relative normal-equation residual
};

// Least squares min ||M x - y||_2 by conjugate gradients on the normal
// equations, using only apply / apply_t. `max_iter` <= 0 means 10 * cols.
LstsqResult lstsq_iterative(const LinOp& m, const Eigen::Ref<const Vector>& y,
                            double tol = 1e-8, Index max_iter = 0);

}  // namespace hdmm
