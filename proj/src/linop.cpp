//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hdmm/linop.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <string>

#include "hdmm/marginals_basis.hpp"

namespace hdmm {

namespace {

constexpr double kRankRelTol = 1e-10;

void check_entry_cap(Index rows, Index cols, Index cap, const char* what) {
  if (rows * cols > cap)
    throw MemoryCapError(std::string(what) + ": dense result " +
                         std::to_string(rows) + "x" + std::to_string(cols) +
                         " exceeds entry cap " + std::to_string(cap));
}

enum class ApplyMode { kForward, kTranspose, kPinv };

Index mode_in_dim(const LinOp& f, ApplyMode m) {
  return m == ApplyMode::kForward ? f.cols() : f.rows();
}
Index mode_out_dim(const LinOp& f, ApplyMode m) {
  return m == ApplyMode::kForward ? f.rows() : f.cols();
}

Matrix mode_apply(const LinOp& f, ApplyMode m, const Eigen::Ref<const Matrix>& x) {
  switch (m) {
    case ApplyMode::kForward:
      return f.apply(x);
    case ApplyMode::kTranspose:
      return f.apply_t(x);
    case ApplyMode::kPinv:
      return f.pinv_apply(x);
  }
  throw Error("unreachable");
}

// Kronecker product times a vector: repeatedly peel off the fastest-varying
// axis, left-multiply by the matching factor, and rotate axes. Never builds
// the product matrix.
Vector kron_vec_apply(const std::vector<LinOpPtr>& factors, ApplyMode mode,
                      const Eigen::Ref<const Vector>& x) {
  Vector cur = x;
  for (auto it = factors.rbegin(); it != factors.rend(); ++it) {
    const LinOp& f = **it;
    const Index nin = mode_in_dim(f, mode);
    const Index nout = mode_out_dim(f, mode);
    const Index rest = cur.size() / nin;
    Eigen::Map<const Matrix> block(cur.data(), nin, rest);
    Matrix t = mode_apply(f, mode, block);
    Vector next(nout * rest);
    Eigen::Map<Matrix>(next.data(), rest, nout) = t.transpose();
    cur = std::move(next);
  }
  return cur;
}

Matrix kron_block_apply(const std::vector<LinOpPtr>& factors, ApplyMode mode,
                        const Eigen::Ref<const Matrix>& x, Index out_rows) {
  Matrix out(out_rows, x.cols());
  for (Index c = 0; c < x.cols(); ++c)
    out.col(c) = kron_vec_apply(factors, mode, x.col(c));
  return out;
}

class DenseOp final : public LinOp {
 public:
  explicit DenseOp(Matrix entries)
      : LinOp({entries.rows(), entries.cols()}), entries_(std::move(entries)) {
    if (!entries_.allFinite())
      throw DomainError("dense operator entries must be finite");
  }
  OpKind kind() const override { return OpKind::kDense; }
  Matrix apply(const Eigen::Ref<const Matrix>& x) const override {
    check_shape(x.rows() == cols(), "dense apply: dimension mismatch");
    return entries_ * x;
  }
  Matrix apply_t(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "dense apply_t: dimension mismatch");
    return entries_.transpose() * y;
  }
  double sensitivity() const override {
    return entries_.cwiseAbs().colwise().sum().maxCoeff();
  }
  LinOpPtr gram(Index) const override {
    return dense(entries_.transpose() * entries_);
  }
  // Minimum-norm least squares solution; exact pseudo-inverse application
  // even for wide or rank-deficient blocks (e.g. T^+ = T^T / n).
  Matrix pinv_apply(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "pinv_apply: dimension mismatch");
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(entries_);
    cod.setThreshold(kRankRelTol);
    return cod.solve(y);
  }
  Matrix materialize(Index entry_cap) const override {
    check_entry_cap(rows(), cols(), entry_cap, "materialize");
    return entries_;
  }

 private:
  Matrix entries_;
};

class IdentityOp final : public LinOp {
 public:
  explicit IdentityOp(Index n) : LinOp({n, n}) {
    if (n < 1) throw DomainError("identity: n must be positive");
  }
  OpKind kind() const override { return OpKind::kIdentity; }
  Matrix apply(const Eigen::Ref<const Matrix>& x) const override {
    check_shape(x.rows() == cols(), "identity apply: dimension mismatch");
    return x;
  }
  Matrix apply_t(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "identity apply_t: dimension mismatch");
    return y;
  }
  double sensitivity() const override { return 1.0; }
  LinOpPtr gram(Index) const override { return identity(cols()); }
  Matrix pinv_apply(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "pinv_apply: dimension mismatch");
    return y;
  }
  Matrix materialize(Index entry_cap) const override {
    check_entry_cap(rows(), cols(), entry_cap, "materialize");
    return Matrix::Identity(rows(), cols());
  }
};

class OnesOp final : public LinOp {
 public:
  OnesOp(Index r, Index c) : LinOp({r, c}) {
    if (r < 1 || c < 1) throw DomainError("ones: dimensions must be positive");
  }
  OpKind kind() const override { return OpKind::kOnes; }
  Matrix apply(const Eigen::Ref<const Matrix>& x) const override {
    check_shape(x.rows() == cols(), "ones apply: dimension mismatch");
    return x.colwise().sum().replicate(rows(), 1);
  }
  Matrix apply_t(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "ones apply_t: dimension mismatch");
    return y.colwise().sum().replicate(cols(), 1);
  }
  double sensitivity() const override { return static_cast<double>(rows()); }
  LinOpPtr gram(Index entry_cap) const override {
    if (rows() == 1) return ones(cols(), cols());
    check_entry_cap(cols(), cols(), entry_cap, "gram");
    return dense(Matrix::Constant(cols(), cols(), static_cast<double>(rows())));
  }
  Matrix pinv_apply(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "pinv_apply: dimension mismatch");
    const double scale = 1.0 / static_cast<double>(rows() * cols());
    return (y.colwise().sum() * scale).replicate(cols(), 1);
  }
  Matrix materialize(Index entry_cap) const override {
    check_entry_cap(rows(), cols(), entry_cap, "materialize");
    return Matrix::Ones(rows(), cols());
  }
};

// All prefix queries [0, i]; lower-triangular all-ones.
class PrefixOp final : public LinOp {
 public:
  explicit PrefixOp(Index n) : LinOp({n, n}) {
    if (n < 1) throw DomainError("prefix: n must be positive");
  }
  OpKind kind() const override { return OpKind::kPrefix; }
  Matrix apply(const Eigen::Ref<const Matrix>& x) const override {
    check_shape(x.rows() == cols(), "prefix apply: dimension mismatch");
    Matrix out = x;
    for (Index i = 1; i < out.rows(); ++i) out.row(i) += out.row(i - 1);
    return out;
  }
  Matrix apply_t(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "prefix apply_t: dimension mismatch");
    Matrix out = y;
    for (Index i = out.rows() - 2; i >= 0; --i) out.row(i) += out.row(i + 1);
    return out;
  }
  double sensitivity() const override { return static_cast<double>(rows()); }
  LinOpPtr gram(Index entry_cap) const override {
    const Index n = cols();
    check_entry_cap(n, n, entry_cap, "gram");
    Matrix g(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        g(i, j) = static_cast<double>(n - std::max(i, j));
    return dense(std::move(g));
  }
  Matrix pinv_apply(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "pinv_apply: dimension mismatch");
    Matrix out = y;
    for (Index i = out.rows() - 1; i >= 1; --i) out.row(i) -= out.row(i - 1);
    return out;
  }
  Matrix materialize(Index entry_cap) const override {
    check_entry_cap(rows(), cols(), entry_cap, "materialize");
    Matrix m = Matrix::Zero(rows(), cols());
    for (Index i = 0; i < rows(); ++i) m.row(i).head(i + 1).setOnes();
    return m;
  }
};

// All interval queries [i, j], i <= j, ordered lexicographically.
class AllRangeOp final : public LinOp {
 public:
  explicit AllRangeOp(Index n) : LinOp({n * (n + 1) / 2, n}) {
    if (n < 1) throw DomainError("allrange: n must be positive");
  }
  OpKind kind() const override { return OpKind::kAllRange; }
  Matrix apply(const Eigen::Ref<const Matrix>& x) const override {
    check_shape(x.rows() == cols(), "allrange apply: dimension mismatch");
    const Index n = cols();
    Matrix s = Matrix::Zero(n + 1, x.cols());
    for (Index i = 0; i < n; ++i) s.row(i + 1) = s.row(i) + x.row(i);
    Matrix out(rows(), x.cols());
    Index r = 0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i; j < n; ++j) out.row(r++) = s.row(j + 1) - s.row(i);
    return out;
  }
  Matrix apply_t(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "allrange apply_t: dimension mismatch");
    const Index n = cols();
    Matrix diff = Matrix::Zero(n + 1, y.cols());
    Index r = 0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i; j < n; ++j) {
        diff.row(i) += y.row(r);
        diff.row(j + 1) -= y.row(r);
        ++r;
      }
    Matrix out(n, y.cols());
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(y.cols());
    for (Index i = 0; i < n; ++i) {
      acc += diff.row(i);
      out.row(i) = acc;
    }
    return out;
  }
  double sensitivity() const override {
    const Index n = cols();
    double best = 0.0;
    for (Index k = 0; k < n; ++k)
      best = std::max(best, static_cast<double>((k + 1) * (n - k)));
    return best;
  }
  LinOpPtr gram(Index entry_cap) const override {
    const Index n = cols();
    check_entry_cap(n, n, entry_cap, "gram");
    Matrix g(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        g(i, j) = static_cast<double>((std::min(i, j) + 1) * (n - std::max(i, j)));
    return dense(std::move(g));
  }
  Matrix pinv_apply(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "pinv_apply: dimension mismatch");
    // Full column rank (contains all singleton queries): solve normal equations
    // with the closed-form Gram.
    Matrix g = gram(cols() * cols())->materialize(cols() * cols());
    Eigen::LLT<Matrix> llt(g);
    if (llt.info() != Eigen::Success)
      throw RankError("pinv_apply: normal equations not positive definite");
    return llt.solve(apply_t(y));
  }
  Matrix materialize(Index entry_cap) const override {
    check_entry_cap(rows(), cols(), entry_cap, "materialize");
    const Index n = cols();
    Matrix m = Matrix::Zero(rows(), n);
    Index r = 0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i; j < n; ++j) m.row(r++).segment(i, j - i + 1).setOnes();
    return m;
  }
};

// All interval queries of a fixed width w: rows [i, i+w-1] for i in [0, n-w].
class RangeWidthOp final : public LinOp {
 public:
  RangeWidthOp(Index width, Index n) : LinOp({n - width + 1, n}), width_(width) {
    if (n < 1) throw DomainError("range_width: n must be positive");
    if (width < 1 || width > n)
      throw DomainError("range_width: width must be in [1, n]");
  }
  OpKind kind() const override { return OpKind::kRangeWidth; }
  Matrix apply(const Eigen::Ref<const Matrix>& x) const override {
    check_shape(x.rows() == cols(), "range_width apply: dimension mismatch");
    const Index n = cols();
    Matrix s = Matrix::Zero(n + 1, x.cols());
    for (Index i = 0; i < n; ++i) s.row(i + 1) = s.row(i) + x.row(i);
    Matrix out(rows(), x.cols());
    for (Index i = 0; i < rows(); ++i) out.row(i) = s.row(i + width_) - s.row(i);
    return out;
  }
  Matrix apply_t(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "range_width apply_t: dimension mismatch");
    const Index n = cols();
    Matrix diff = Matrix::Zero(n + 1, y.cols());
    for (Index i = 0; i < rows(); ++i) {
      diff.row(i) += y.row(i);
      diff.row(i + width_) -= y.row(i);
    }
    Matrix out(n, y.cols());
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(y.cols());
    for (Index i = 0; i < n; ++i) {
      acc += diff.row(i);
      out.row(i) = acc;
    }
    return out;
  }
  double sensitivity() const override {
    double best = 0.0;
    for (Index k = 0; k < cols(); ++k) best = std::max(best, cover_count(k, k));
    return best;
  }
  LinOpPtr gram(Index entry_cap) const override {
    const Index n = cols();
    check_entry_cap(n, n, entry_cap, "gram");
    Matrix g(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) g(i, j) = cover_count(i, j);
    return dense(std::move(g));
  }
  Matrix materialize(Index entry_cap) const override {
    check_entry_cap(rows(), cols(), entry_cap, "materialize");
    Matrix m = Matrix::Zero(rows(), cols());
    for (Index i = 0; i < rows(); ++i) m.row(i).segment(i, width_).setOnes();
    return m;
  }

 private:
  double cover_count(Index i, Index j) const {
    const Index lo = std::max<Index>(0, std::max(i, j) - width_ + 1);
    const Index hi = std::min(cols() - width_, std::min(i, j));
    return hi >= lo ? static_cast<double>(hi - lo + 1) : 0.0;
  }
  Index width_;
};

// inner * P for a domain-cell permutation P: column j of the result is column
// perm[j] of inner.
class ColPermutedOp final : public LinOp {
 public:
  ColPermutedOp(LinOpPtr inner, std::vector<Index> perm)
      : LinOp(inner->shape()), inner_(std::move(inner)), perm_(std::move(perm)) {
    if (static_cast<Index>(perm_.size()) != cols())
      throw DomainError("col_permuted: permutation size mismatch");
    std::vector<bool> seen(perm_.size(), false);
    for (Index p : perm_) {
      if (p < 0 || p >= cols() || seen[p])
        throw DomainError("col_permuted: not a permutation");
      seen[p] = true;
    }
  }
  OpKind kind() const override { return OpKind::kColPermuted; }
  Matrix apply(const Eigen::Ref<const Matrix>& x) const override {
    check_shape(x.rows() == cols(), "col_permuted apply: dimension mismatch");
    Matrix xp(x.rows(), x.cols());
    for (Index j = 0; j < cols(); ++j) xp.row(perm_[j]) = x.row(j);
    return inner_->apply(xp);
  }
  Matrix apply_t(const Eigen::Ref<const Matrix>& y) const override {
    Matrix t = inner_->apply_t(y);
    Matrix out(t.rows(), t.cols());
    for (Index j = 0; j < cols(); ++j) out.row(j) = t.row(perm_[j]);
    return out;
  }
  double sensitivity() const override { return inner_->sensitivity(); }
  LinOpPtr gram(Index entry_cap) const override {
    Matrix g = inner_->gram(entry_cap)->materialize(entry_cap);
    Matrix out(g.rows(), g.cols());
    for (Index i = 0; i < g.rows(); ++i)
      for (Index j = 0; j < g.cols(); ++j) out(i, j) = g(perm_[i], perm_[j]);
    return dense(std::move(out));
  }
  Matrix pinv_apply(const Eigen::Ref<const Matrix>& y) const override {
    Matrix t = inner_->pinv_apply(y);
    Matrix out(t.rows(), t.cols());
    for (Index j = 0; j < cols(); ++j) out.row(j) = t.row(perm_[j]);
    return out;
  }
  Matrix materialize(Index entry_cap) const override {
    Matrix m = inner_->materialize(entry_cap);
    Matrix out(m.rows(), m.cols());
    for (Index j = 0; j < cols(); ++j) out.col(j) = m.col(perm_[j]);
    return out;
  }

 private:
  LinOpPtr inner_;
  std::vector<Index> perm_;
};

Shape kron_shape(const std::vector<LinOpPtr>& factors) {
  Shape s{1, 1};
  for (const auto& f : factors) {
    s.rows *= f->rows();
    s.cols *= f->cols();
  }
  return s;
}

class KronOp final : public LinOp {
 public:
  explicit KronOp(std::vector<LinOpPtr> factors)
      : LinOp(kron_shape(factors)), factors_(std::move(factors)) {}
  OpKind kind() const override { return OpKind::kKron; }
  const std::vector<LinOpPtr>& factors() const { return factors_; }
  Matrix apply(const Eigen::Ref<const Matrix>& x) const override {
    check_shape(x.rows() == cols(), "kron apply: dimension mismatch");
    return kron_block_apply(factors_, ApplyMode::kForward, x, rows());
  }
  Matrix apply_t(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "kron apply_t: dimension mismatch");
    return kron_block_apply(factors_, ApplyMode::kTranspose, y, cols());
  }
  double sensitivity() const override {
    double s = 1.0;
    for (const auto& f : factors_) s *= f->sensitivity();
    return s;
  }
  LinOpPtr gram(Index entry_cap) const override {
    std::vector<LinOpPtr> g;
    g.reserve(factors_.size());
    for (const auto& f : factors_) g.push_back(f->gram(entry_cap));
    return kron(std::move(g));
  }
  Matrix pinv_apply(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "pinv_apply: dimension mismatch");
    return kron_block_apply(factors_, ApplyMode::kPinv, y, cols());
  }
  Matrix materialize(Index entry_cap) const override {
    check_entry_cap(rows(), cols(), entry_cap, "materialize");
    Matrix acc = factors_.front()->materialize(entry_cap);
    for (std::size_t i = 1; i < factors_.size(); ++i) {
      Matrix next = factors_[i]->materialize(entry_cap);
      Matrix prod(acc.rows() * next.rows(), acc.cols() * next.cols());
      for (Index r = 0; r < acc.rows(); ++r)
        for (Index c = 0; c < acc.cols(); ++c)
          prod.block(r * next.rows(), c * next.cols(), next.rows(),
                     next.cols()) = acc(r, c) * next;
      acc = std::move(prod);
    }
    return acc;
  }

 private:
  std::vector<LinOpPtr> factors_;
};

class StackOp final : public LinOp {
 public:
  explicit StackOp(std::vector<std::pair<double, LinOpPtr>> terms)
      : LinOp(stack_shape(terms)), terms_(std::move(terms)) {}
  OpKind kind() const override { return OpKind::kStack; }
  const std::vector<std::pair<double, LinOpPtr>>& terms() const { return terms_; }
  Matrix apply(const Eigen::Ref<const Matrix>& x) const override {
    check_shape(x.rows() == cols(), "stack apply: dimension mismatch");
    Matrix out(rows(), x.cols());
    Index at = 0;
    for (const auto& [w, op] : terms_) {
      out.middleRows(at, op->rows()) = w * op->apply(x);
      at += op->rows();
    }
    return out;
  }
  Matrix apply_t(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "stack apply_t: dimension mismatch");
    Matrix out = Matrix::Zero(cols(), y.cols());
    Index at = 0;
    for (const auto& [w, op] : terms_) {
      out += w * op->apply_t(y.middleRows(at, op->rows()));
      at += op->rows();
    }
    return out;
  }
  // Column sums add across stacked blocks.
  double sensitivity() const override {
    double s = 0.0;
    for (const auto& [w, op] : terms_) s += std::abs(w) * op->sensitivity();
    return s;
  }
  LinOpPtr gram(Index entry_cap) const override {
    check_entry_cap(cols(), cols(), entry_cap, "gram");
    Matrix g = Matrix::Zero(cols(), cols());
    for (const auto& [w, op] : terms_)
      g += (w * w) * op->gram(entry_cap)->materialize(entry_cap);
    return dense(std::move(g));
  }
  Matrix pinv_apply(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "pinv_apply: dimension mismatch");
    if (cols() * cols() <= kDenseEntryCap) {
      Matrix g = gram(kDenseEntryCap)->materialize(kDenseEntryCap);
      Eigen::LLT<Matrix> llt(g);
      if (llt.info() != Eigen::Success)
        throw RankError("pinv_apply: stack is column rank deficient");
      return llt.solve(apply_t(y));
    }
    Matrix out(cols(), y.cols());
    for (Index c = 0; c < y.cols(); ++c)
      out.col(c) = lstsq_iterative(*this, y.col(c), 1e-10).x;
    return out;
  }

 private:
  static Shape stack_shape(const std::vector<std::pair<double, LinOpPtr>>& terms) {
    if (terms.empty()) throw DomainError("stack: no terms");
    Shape s{0, terms.front().second->cols()};
    for (const auto& [w, op] : terms) {
      if (op->cols() != s.cols)
        throw ShapeError("stack: all terms must share the column count");
      if (!(w > 0.0) || !std::isfinite(w))
        throw DomainError("stack: weights must be positive and finite");
      s.rows += op->rows();
    }
    return s;
  }
  std::vector<std::pair<double, LinOpPtr>> terms_;
};

// p-Identity strategy A(Theta) = [I; Theta] D, D = diag(1_N + 1_p Theta)^{-1}.
// Every column has L1 norm exactly 1.
class PIdentityOp final : public LinOp {
 public:
  explicit PIdentityOp(Matrix theta)
      : LinOp({theta.rows() + theta.cols(), theta.cols()}),
        theta_(std::move(theta)) {
    if (!theta_.allFinite() || (theta_.array() < 0.0).any())
      throw DomainError("p_identity: theta must be nonnegative and finite");
    cinv_ = theta_.colwise().sum().transpose().array() + 1.0;  // D^{-1} diagonal
    const Index p = theta_.rows();
    Matrix m = Matrix::Identity(p, p) + theta_ * theta_.transpose();
    llt_.compute(m);
    if (llt_.info() != Eigen::Success)
      throw RankError("p_identity: capacitance factorization failed");
  }
  OpKind kind() const override { return OpKind::kPIdentity; }
  const Matrix& theta() const { return theta_; }
  Matrix apply(const Eigen::Ref<const Matrix>& x) const override {
    check_shape(x.rows() == cols(), "p_identity apply: dimension mismatch");
    Matrix out(rows(), x.cols());
    out.topRows(cols()) = x.array().colwise() / cinv_.array();
    out.bottomRows(theta_.rows()) = theta_ * out.topRows(cols());
    return out;
  }
  Matrix apply_t(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "p_identity apply_t: dimension mismatch");
    Matrix t = y.topRows(cols()) +
               theta_.transpose() * y.bottomRows(theta_.rows());
    return t.array().colwise() / cinv_.array();
  }
  double sensitivity() const override { return 1.0; }
  LinOpPtr gram(Index entry_cap) const override {
    const Index n = cols();
    check_entry_cap(n, n, entry_cap, "gram");
    Matrix g = Matrix::Identity(n, n) + theta_.transpose() * theta_;
    g.array().colwise() /= cinv_.array();
    g.array().rowwise() /= cinv_.transpose().array();
    return dense(std::move(g));
  }
  // A^+ y = (A^T A)^{-1} A^T y with the Woodbury form
  // (A^T A)^{-1} = D^{-1} [I - Theta^T (I_p + Theta Theta^T)^{-1} Theta] D^{-1}.
  Matrix pinv_apply(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "pinv_apply: dimension mismatch");
    Matrix t = apply_t(y);
    Matrix s = t.array().colwise() * cinv_.array();
    Matrix r = s - theta_.transpose() * llt_.solve(theta_ * s);
    return r.array().colwise() * cinv_.array();
  }
  Matrix materialize(Index entry_cap) const override {
    check_entry_cap(rows(), cols(), entry_cap, "materialize");
    Matrix m(rows(), cols());
    m.topRows(cols()) =
        Matrix(Vector(cinv_.cwiseInverse()).asDiagonal());
    m.bottomRows(theta_.rows()) =
        theta_.array().rowwise() / cinv_.transpose().array();
    return m;
  }

 private:
  Matrix theta_;
  Vector cinv_;
  Eigen::LLT<Matrix> llt_;
};

// G(v) = sum over bitmasks a of v_a C(a); see marginals_basis.hpp.
class MarginalsGramOp final : public LinOp {
 public:
  MarginalsGramOp(Vector weights, std::vector<Index> domain)
      : LinOp(gram_shape(domain)),
        weights_(std::move(weights)),
        domain_(std::move(domain)) {
    const Index count = Index{1} << domain_.size();
    if (weights_.size() != count)
      throw DomainError("marginals_gram: weights must have length 2^d");
    eye_.reserve(domain_.size());
    all_.reserve(domain_.size());
    for (Index n : domain_) {
      eye_.push_back(identity(n));
      all_.push_back(ones(n, n));
    }
  }
  OpKind kind() const override { return OpKind::kMarginalsGram; }
  const Vector& weights() const { return weights_; }
  const std::vector<Index>& domain() const { return domain_; }
  Matrix apply(const Eigen::Ref<const Matrix>& x) const override {
    check_shape(x.rows() == cols(), "marginals_gram apply: dimension mismatch");
    Matrix out = Matrix::Zero(rows(), x.cols());
    std::vector<LinOpPtr> factors(domain_.size());
    for (Index a = 0; a < weights_.size(); ++a) {
      if (weights_[a] == 0.0) continue;
      for (std::size_t i = 0; i < domain_.size(); ++i)
        factors[i] = ((a >> i) & 1) ? eye_[i] : all_[i];
      out.noalias() +=
          weights_[a] * kron_block_apply(factors, ApplyMode::kForward, x, rows());
    }
    return out;
  }
  Matrix apply_t(const Eigen::Ref<const Matrix>& y) const override {
    return apply(y);  // symmetric
  }
  // Exact for nonnegative weights (every C(a) entry is nonnegative).
  double sensitivity() const override {
    double s = 0.0;
    for (Index a = 0; a < weights_.size(); ++a)
      s += std::abs(weights_[a]) * c_scalar(static_cast<MaskIndex>(a), domain_);
    return s;
  }
  LinOpPtr gram(Index) const override {
    const Vector c = c_table(domain_);
    return marginals_gram(g_multiply_weights(weights_, weights_, c), domain_);
  }
  Matrix pinv_apply(const Eigen::Ref<const Matrix>& y) const override {
    check_shape(y.rows() == rows(), "pinv_apply: dimension mismatch");
    Vector vinv = g_inverse_weights(weights_, domain_);
    return marginals_gram(std::move(vinv), domain_)->apply(y);
  }

 private:
  static Shape gram_shape(const std::vector<Index>& domain) {
    if (domain.empty() || domain.size() > 30)
      throw DomainError("marginals_gram: domain must have 1..30 attributes");
    Index n = 1;
    for (Index ni : domain) {
      if (ni < 1) throw DomainError("marginals_gram: domain sizes must be >= 1");
      n *= ni;
    }
    return {n, n};
  }
  Vector weights_;
  std::vector<Index> domain_;
  std::vector<LinOpPtr> eye_, all_;
};

}  // namespace

LinOpPtr LinOp::gram(Index entry_cap) const {
  Matrix e = materialize(entry_cap);
  return dense(e.transpose() * e);
}

Matrix LinOp::pinv_apply(const Eigen::Ref<const Matrix>& y) const {
  check_shape(y.rows() == rows(), "pinv_apply: dimension mismatch");
  Matrix e = materialize(kDenseEntryCap);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(std::move(e));
  cod.setThreshold(kRankRelTol);
  return cod.solve(y);
}

Matrix LinOp::materialize(Index entry_cap) const {
  check_entry_cap(rows(), cols(), entry_cap, "materialize");
  return apply(Matrix::Identity(cols(), cols()));
}

LinOpPtr dense(Matrix entries) { return std::make_shared<DenseOp>(std::move(entries)); }
LinOpPtr identity(Index n) { return std::make_shared<IdentityOp>(n); }
LinOpPtr ones(Index rows, Index cols) { return std::make_shared<OnesOp>(rows, cols); }
LinOpPtr prefix_queries(Index n) { return std::make_shared<PrefixOp>(n); }
LinOpPtr all_range_queries(Index n) { return std::make_shared<AllRangeOp>(n); }
LinOpPtr range_width_queries(Index width, Index n) {
  return std::make_shared<RangeWidthOp>(width, n);
}
LinOpPtr col_permuted(LinOpPtr inner, std::vector<Index> perm) {
  return std::make_shared<ColPermutedOp>(std::move(inner), std::move(perm));
}

LinOpPtr kron(std::vector<LinOpPtr> factors) {
  if (factors.empty()) throw DomainError("kron: no factors");
  // Flatten nested products (associativity) and drop the node for d = 1.
  std::vector<LinOpPtr> flat;
  for (auto& f : factors) {
    if (f->kind() == OpKind::kKron) {
      const auto& sub = static_cast<const KronOp&>(*f).factors();
      flat.insert(flat.end(), sub.begin(), sub.end());
    } else {
      flat.push_back(std::move(f));
    }
  }
  if (flat.size() == 1) return flat.front();
  return std::make_shared<KronOp>(std::move(flat));
}

LinOpPtr stack(std::vector<std::pair<double, LinOpPtr>> terms) {
  if (terms.size() == 1 && terms.front().first == 1.0)
    return terms.front().second;
  return std::make_shared<StackOp>(std::move(terms));
}

LinOpPtr p_identity(Matrix theta) {
  return std::make_shared<PIdentityOp>(std::move(theta));
}

LinOpPtr marginals_gram(Vector weights, std::vector<Index> domain) {
  return std::make_shared<MarginalsGramOp>(std::move(weights), std::move(domain));
}

Vector matvec(const LinOp& m, const Eigen::Ref<const Vector>& x) {
  check_shape(x.size() == m.cols(), "matvec: dimension mismatch");
  return m.apply(x);
}

Vector rmatvec(const LinOp& m, const Eigen::Ref<const Vector>& y) {
  check_shape(y.size() == m.rows(), "rmatvec: dimension mismatch");
  return m.apply_t(y);
}

Vector pinv_apply(const LinOp& m, const Eigen::Ref<const Vector>& y) {
  check_shape(y.size() == m.rows(), "pinv_apply: dimension mismatch");
  return m.pinv_apply(y);
}

LstsqResult lstsq_iterative(const LinOp& m, const Eigen::Ref<const Vector>& y,
                            double tol, Index max_iter) {
  check_shape(y.size() == m.rows(), "lstsq: dimension mismatch");
  if (max_iter <= 0) max_iter = 10 * m.cols();
  LstsqResult res;
  res.x = Vector::Zero(m.cols());
  Vector r = y;
  Vector s = m.apply_t(r);
  double gamma = s.squaredNorm();
  const double gamma0 = gamma;
  if (gamma0 == 0.0) {
    res.converged = true;
    return res;
  }
  Vector p = s;
  for (Index it = 0; it < max_iter; ++it) {
    Vector q = m.apply(p);
    const double qq = q.squaredNorm();
    if (qq == 0.0) break;
    const double alpha = gamma / qq;
    res.x += alpha * p;
    r -= alpha * q;
    s = m.apply_t(r);
    const double gamma_next = s.squaredNorm();
    res.iterations = it + 1;
    res.residual = std::sqrt(gamma_next / gamma0);
    if (res.residual < tol) {
      res.converged = true;
      return res;
    }
    p = s + (gamma_next / gamma) * p;
    gamma = gamma_next;
  }
  return res;
}

}  // namespace hdmm
