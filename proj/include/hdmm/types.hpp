//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace hdmm {

using Scalar = double;
using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Shape {
  Index rows = 0;
  Index cols = 0;
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Dense materialization / dense Gram guard, in matrix entries.
inline constexpr Index kDenseEntryCap = 10'000'000;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid value for a domain type (negative weight, bad block, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A dense intermediate would exceed the configured entry cap.
class MemoryCapError : public Error {
 public:
  using Error::Error;
};

// A solve failed because the operator is rank deficient beyond tolerance.
class RankError : public Error {
 public:
  using Error::Error;
};

// A strategy does not support the requested workload / weights.
class SupportError : public Error {
 public:
  using Error::Error;
};

// File system / stream failure (distinct CLI exit code).
class IoError : public Error {
 public:
  using Error::Error;
};

inline void check_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace hdmm
