#pragma once

#include <cmath>

#include "subrq/common.hpp"

namespace subrq {

// Truncated multivariate Taylor scalar: value, gradient, Hessian and
// symmetric third-derivative tensor in `n` variables, truncated at total
// order `ord` (0..3). Arrays hold raw partial derivatives (no factorial
// normalization). Arithmetic propagates derivatives exactly at the carried
// order; domain violations throw instead of producing NaN.
class TaylorN {
 public:
  TaylorN() : n_(0), ord_(0), v_(0.0) {}

  static TaylorN constant(int n, int ord, double v) {
    TaylorN t(n, ord);
    t.v_ = v;
    return t;
  }

  static TaylorN variable(int n, int ord, int index, double v) {
    TaylorN t(n, ord);
    t.v_ = v;
    if (ord >= 1) t.g_[index] = 1.0;
    return t;
  }

  int vars() const { return n_; }
  int order() const { return ord_; }
  double value() const { return v_; }
  const VectorXd& grad() const { return g_; }
  const MatrixXd& hess() const { return h_; }
  const Tensor3& third() const { return t_; }
  double& value() { return v_; }
  VectorXd& grad() { return g_; }
  MatrixXd& hess() { return h_; }
  Tensor3& third() { return t_; }

  friend TaylorN operator+(const TaylorN& a, const TaylorN& b) {
    TaylorN r = a;
    r.v_ += b.v_;
    if (r.ord_ >= 1) r.g_ += b.g_;
    if (r.ord_ >= 2) r.h_ += b.h_;
    if (r.ord_ >= 3) r.add_third(b.t_, 1.0);
    return r;
  }

  friend TaylorN operator-(const TaylorN& a, const TaylorN& b) {
    TaylorN r = a;
    r.v_ -= b.v_;
    if (r.ord_ >= 1) r.g_ -= b.g_;
    if (r.ord_ >= 2) r.h_ -= b.h_;
    if (r.ord_ >= 3) r.add_third(b.t_, -1.0);
    return r;
  }

  friend TaylorN operator-(const TaylorN& a) {
    return TaylorN::constant(a.n_, a.ord_, 0.0) - a;
  }

  friend TaylorN operator*(const TaylorN& a, const TaylorN& b) {
    TaylorN r(a.n_, a.ord_);
    r.v_ = a.v_ * b.v_;
    if (r.ord_ >= 1) r.g_ = a.g_ * b.v_ + b.g_ * a.v_;
    if (r.ord_ >= 2)
      r.h_ = a.h_ * b.v_ + b.h_ * a.v_ + a.g_ * b.g_.transpose() +
             b.g_ * a.g_.transpose();
    if (r.ord_ >= 3) {
      const int n = a.n_;
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j)
          for (int k = j; k < n; ++k) {
            double s = a.t_(i, j, k) * b.v_ + b.t_(i, j, k) * a.v_ +
                       a.h_(i, j) * b.g_[k] + a.h_(i, k) * b.g_[j] +
                       a.h_(j, k) * b.g_[i] + b.h_(i, j) * a.g_[k] +
                       b.h_(i, k) * a.g_[j] + b.h_(j, k) * a.g_[i];
            r.set_sym(i, j, k, s);
          }
    }
    return r;
  }

  friend TaylorN operator*(const TaylorN& a, double s) {
    return a * TaylorN::constant(a.n_, a.ord_, s);
  }
  friend TaylorN operator*(double s, const TaylorN& a) { return a * s; }
  friend TaylorN operator+(const TaylorN& a, double s) {
    return a + TaylorN::constant(a.n_, a.ord_, s);
  }
  friend TaylorN operator+(double s, const TaylorN& a) { return a + s; }
  friend TaylorN operator-(const TaylorN& a, double s) { return a + (-s); }
  friend TaylorN operator-(double s, const TaylorN& a) {
    return TaylorN::constant(a.n_, a.ord_, s) - a;
  }

  friend TaylorN operator/(const TaylorN& a, const TaylorN& b) {
    if (b.v_ == 0.0) throw DomainError("division by zero");
    const double x = b.v_;
    return a * apply(b, 1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x),
                     -6.0 / (x * x * x * x));
  }
  friend TaylorN operator/(const TaylorN& a, double s) { return a * (1.0 / s); }
  friend TaylorN operator/(double s, const TaylorN& a) {
    return TaylorN::constant(a.n_, a.ord_, s) / a;
  }

  // Chain rule through a scalar analytic function given its derivatives
  // phi^(0..3) at the primal value.
  static TaylorN apply(const TaylorN& f, double p0, double p1, double p2,
                       double p3) {
    TaylorN r(f.n_, f.ord_);
    r.v_ = p0;
    if (r.ord_ >= 1) r.g_ = p1 * f.g_;
    if (r.ord_ >= 2) r.h_ = p1 * f.h_ + p2 * (f.g_ * f.g_.transpose());
    if (r.ord_ >= 3) {
      const int n = f.n_;
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j)
          for (int k = j; k < n; ++k) {
            double s = p3 * f.g_[i] * f.g_[j] * f.g_[k] +
                       p2 * (f.h_(i, j) * f.g_[k] + f.h_(i, k) * f.g_[j] +
                             f.h_(j, k) * f.g_[i]) +
                       p1 * f.t_(i, j, k);
            r.set_sym(i, j, k, s);
          }
    }
    return r;
  }

  friend TaylorN sin(const TaylorN& f) {
    const double s = std::sin(f.v_), c = std::cos(f.v_);
    return apply(f, s, c, -s, -c);
  }
  friend TaylorN cos(const TaylorN& f) {
    const double s = std::sin(f.v_), c = std::cos(f.v_);
    return apply(f, c, -s, -c, s);
  }
  friend TaylorN exp(const TaylorN& f) {
    const double e = std::exp(f.v_);
    return apply(f, e, e, e, e);
  }
  friend TaylorN sqrt(const TaylorN& f) {
    if (f.v_ < 0.0) throw DomainError("sqrt of negative value");
    if (f.v_ == 0.0 && f.ord_ >= 1)
      throw DomainError("sqrt differentiated at zero");
    const double r = std::sqrt(f.v_);
    return apply(f, r, 0.5 / r, -0.25 / (r * f.v_),
                 0.375 / (r * f.v_ * f.v_));
  }

  // Integer power by repeated squaring; m < 0 uses the reciprocal.
  friend TaylorN powi(const TaylorN& f, long m) {
    if (m < 0) return 1.0 / powi(f, -m);
    TaylorN acc = TaylorN::constant(f.n_, f.ord_, 1.0);
    TaylorN base = f;
    for (long e = m; e > 0; e >>= 1) {
      if (e & 1) acc = acc * base;
      if (e > 1) base = base * base;
    }
    return acc;
  }

 private:
  TaylorN(int n, int ord) : n_(n), ord_(ord), v_(0.0) {
    if (ord >= 1) g_ = VectorXd::Zero(n);
    if (ord >= 2) h_ = MatrixXd::Zero(n, n);
    if (ord >= 3) t_ = Tensor3(n);
  }

  void set_sym(int i, int j, int k, double s) {
    t_(i, j, k) = s;
    t_(i, k, j) = s;
    t_(j, i, k) = s;
    t_(j, k, i) = s;
    t_(k, i, j) = s;
    t_(k, j, i) = s;
  }

  void add_third(const Tensor3& o, double w) {
    const int n = n_;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) t_(i, j, k) += w * o(i, j, k);
  }

  int n_;
  int ord_;
  double v_;
  VectorXd g_;
  MatrixXd h_;
  Tensor3 t_;
};

inline double primal(double x) { return x; }
inline double primal(const TaylorN& x) { return x.value(); }

// Minimal dense matrix over a generic jet scalar; only the operations the
// library needs (product, inverse by Gauss-Jordan with primal pivoting).
template <class S>
class SmallMat {
 public:
  SmallMat() : r_(0), c_(0) {}
  SmallMat(int r, int c, const S& fill) : r_(r), c_(c), a_(r * c, fill) {}

  int rows() const { return r_; }
  int cols() const { return c_; }
  S& operator()(int i, int j) { return a_[i * c_ + j]; }
  const S& operator()(int i, int j) const { return a_[i * c_ + j]; }

  friend SmallMat operator*(const SmallMat& x, const SmallMat& y) {
    SmallMat z(x.r_, y.c_, x(0, 0) * 0.0);
    for (int i = 0; i < x.r_; ++i)
      for (int k = 0; k < x.c_; ++k)
        for (int j = 0; j < y.c_; ++j) z(i, j) = z(i, j) + x(i, k) * y(k, j);
    return z;
  }

  SmallMat transpose() const {
    SmallMat z(c_, r_, a_[0] * 0.0);
    for (int i = 0; i < r_; ++i)
      for (int j = 0; j < c_; ++j) z(j, i) = (*this)(i, j);
    return z;
  }

  SmallMat inverse() const {
    const int n = r_;
    SmallMat a = *this;
    SmallMat inv(n, n, a_[0] * 0.0);
    const S one = a_[0] * 0.0 + 1.0;
    for (int i = 0; i < n; ++i) inv(i, i) = one;
    for (int col = 0; col < n; ++col) {
      int piv = col;
      for (int i = col + 1; i < n; ++i)
        if (std::abs(primal(a(i, col))) > std::abs(primal(a(piv, col))))
          piv = i;
      if (primal(a(piv, col)) == 0.0)
        throw NumericError("singular matrix in jet inverse");
      if (piv != col)
        for (int j = 0; j < n; ++j) {
          std::swap(a(piv, j), a(col, j));
          std::swap(inv(piv, j), inv(col, j));
        }
      S d = one / a(col, col);
      for (int j = 0; j < n; ++j) {
        a(col, j) = a(col, j) * d;
        inv(col, j) = inv(col, j) * d;
      }
      for (int i = 0; i < n; ++i) {
        if (i == col) continue;
        S f = a(i, col);
        for (int j = 0; j < n; ++j) {
          a(i, j) = a(i, j) - f * a(col, j);
          inv(i, j) = inv(i, j) - f * inv(col, j);
        }
      }
    }
    return inv;
  }

 private:
  int r_, c_;
  std::vector<S> a_;
};

}  // namespace subrq
