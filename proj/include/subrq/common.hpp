#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace subrq {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Base class for all library errors. `what()` carries a human-readable
// message; subclasses add machine-readable context.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised by the expression parser; `offset` is the byte offset into the
// source string at which the problem was detected.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t offset)
      : Error(msg + " (at byte " + std::to_string(offset) + ")"),
        offset(offset) {}
  std::size_t offset;
};

// Raised on evaluation-domain violations (division by zero, sqrt of a
// negative number) and on invalid numeric inputs. Never silently
// produces NaN.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Raised when a numeric routine cannot certify its own postcondition
// (failed Newton solve, rank defect where none is allowed, tolerance
// violation in a cross-check).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Dense symmetric-capable rank-3 tensor, n x n x n, row-major flat storage.
class Tensor3 {
 public:
  Tensor3() : n_(0) {}
  explicit Tensor3(int n) : n_(n), a_(static_cast<std::size_t>(n) * n * n, 0.0) {}

  int dim() const { return n_; }
  double& operator()(int i, int j, int k) { return a_[idx(i, j, k)]; }
  double operator()(int i, int j, int k) const { return a_[idx(i, j, k)]; }

  void setZero() { std::fill(a_.begin(), a_.end(), 0.0); }

  // Contraction over the first index: sum_i v_i T(i,j,k).
  MatrixXd contract_first(const VectorXd& v) const {
    MatrixXd m = MatrixXd::Zero(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        for (int k = 0; k < n_; ++k) m(j, k) += v[i] * (*this)(i, j, k);
    return m;
  }

  // Contraction over the last index: sum_k T(i,j,k) v_k.
  MatrixXd contract_last(const VectorXd& v) const {
    MatrixXd m = MatrixXd::Zero(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        for (int k = 0; k < n_; ++k) m(i, j) += (*this)(i, j, k) * v[k];
    return m;
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : a_) m = std::max(m, std::abs(x));
    return m;
  }

 private:
  std::size_t idx(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n_ + j) * n_ + k;
  }
  int n_;
  std::vector<double> a_;
};

// Single-entry matrix F_ij (1 at row i, col j, zero elsewhere) and the
// symmetrized basis E_ij = F_ij + F_ji used throughout the control basis.
inline MatrixXd single_entry(int d, int i, int j) {
  MatrixXd m = MatrixXd::Zero(d, d);
  m(i, j) = 1.0;
  return m;
}

inline MatrixXd sym_entry(int d, int i, int j) {
  MatrixXd m = MatrixXd::Zero(d, d);
  m(i, j) += 1.0;
  m(j, i) += 1.0;
  return m;
}

// Index pairs (i,j), i<=j, of a symmetric d x d matrix in row-major order.
inline std::vector<std::pair<int, int>> sym_index_pairs(int d) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) out.emplace_back(i, j);
  return out;
}

// Standard symplectic structure [[0, I], [-I, 0]] on R^{2m}.
inline MatrixXd symplectic_J(int m) {
  MatrixXd J = MatrixXd::Zero(2 * m, 2 * m);
  J.topRightCorner(m, m) = MatrixXd::Identity(m, m);
  J.bottomLeftCorner(m, m) = -MatrixXd::Identity(m, m);
  return J;
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

}  // namespace subrq
