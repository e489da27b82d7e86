#pragma once

#include <cmath>
#include <functional>

#include "subrq/common.hpp"

namespace subrq {

// Truncated univariate Taylor series sum_k c[k] s^k, k <= ord. Arithmetic
// truncates at the common order; analytic functions are applied by
// composing with the Taylor polynomial of the outer function, which is
// exact at the carried order.
class Series {
 public:
  Series() : c_(1, 0.0) {}
  explicit Series(int ord, double v0 = 0.0) : c_(ord + 1, 0.0) { c_[0] = v0; }
  static Series variable(int ord, double v0) {
    Series s(ord, v0);
    if (ord >= 1) s.c_[1] = 1.0;
    return s;
  }

  int order() const { return static_cast<int>(c_.size()) - 1; }
  double operator[](int k) const {
    return k < static_cast<int>(c_.size()) ? c_[k] : 0.0;
  }
  double& coeff(int k) { return c_[k]; }

  double eval(double s) const {
    double acc = 0.0;
    for (int k = order(); k >= 0; --k) acc = acc * s + c_[k];
    return acc;
  }

  // Coefficient series of the derivative, same truncation order with the
  // top coefficient dropped.
  Series derivative() const {
    Series d(std::max(order() - 1, 0));
    for (int k = 1; k <= order(); ++k) d.c_[k - 1] = k * c_[k];
    return d;
  }

  // Antiderivative with zero constant term, order raised by one up to cap.
  Series antiderivative(int cap) const {
    Series a(std::min(order() + 1, cap));
    for (int k = 0; k <= order() && k + 1 <= a.order(); ++k)
      a.c_[k + 1] = c_[k] / (k + 1);
    return a;
  }

  friend Series operator+(const Series& a, const Series& b) {
    Series r(std::max(a.order(), b.order()));
    for (int k = 0; k <= r.order(); ++k) r.c_[k] = a[k] + b[k];
    return r;
  }
  friend Series operator-(const Series& a, const Series& b) {
    Series r(std::max(a.order(), b.order()));
    for (int k = 0; k <= r.order(); ++k) r.c_[k] = a[k] - b[k];
    return r;
  }
  friend Series operator-(const Series& a) { return a * -1.0; }
  friend Series operator*(const Series& a, const Series& b) {
    Series r(std::max(a.order(), b.order()));
    for (int k = 0; k <= r.order(); ++k) {
      double s = 0.0;
      for (int i = 0; i <= k; ++i) s += a[i] * b[k - i];
      r.c_[k] = s;
    }
    return r;
  }
  friend Series operator*(const Series& a, double s) {
    Series r = a;
    for (auto& c : r.c_) c *= s;
    return r;
  }
  friend Series operator*(double s, const Series& a) { return a * s; }
  friend Series operator+(const Series& a, double s) {
    Series r = a;
    r.c_[0] += s;
    return r;
  }
  friend Series operator+(double s, const Series& a) { return a + s; }
  friend Series operator-(const Series& a, double s) { return a + (-s); }
  friend Series operator-(double s, const Series& a) { return (-a) + s; }

  // Composition with an analytic outer function given a generator for its
  // k-th derivative at the primal value.
  static Series apply(const Series& f,
                      const std::function<double(int)>& deriv_at_primal) {
    const int r = f.order();
    Series dx = f;
    dx.c_[0] = 0.0;
    Series acc(r, deriv_at_primal(0));
    Series pw(r, 1.0);
    double fact = 1.0;
    for (int k = 1; k <= r; ++k) {
      pw = pw * dx;
      fact *= k;
      acc = acc + pw * (deriv_at_primal(k) / fact);
    }
    return acc;
  }

  friend Series sin(const Series& f) {
    double s = std::sin(f[0]), c = std::cos(f[0]);
    return apply(f, [s, c](int k) {
      switch (k % 4) {
        case 0: return s;
        case 1: return c;
        case 2: return -s;
        default: return -c;
      }
    });
  }
  friend Series cos(const Series& f) {
    double s = std::sin(f[0]), c = std::cos(f[0]);
    return apply(f, [s, c](int k) {
      switch (k % 4) {
        case 0: return c;
        case 1: return -s;
        case 2: return -c;
        default: return s;
      }
    });
  }
  friend Series exp(const Series& f) {
    double e = std::exp(f[0]);
    return apply(f, [e](int) { return e; });
  }
  friend Series sqrt(const Series& f) {
    if (f[0] <= 0.0) throw DomainError("series sqrt needs positive primal");
    double r0 = std::sqrt(f[0]);
    return apply(f, [x = f[0], r0](int k) {
      double c = r0, e = 0.5;
      for (int i = 0; i < k; ++i) {
        c *= e / x;
        e -= 1.0;
      }
      return c;
    });
  }
  friend Series operator/(const Series& a, const Series& b) {
    if (b[0] == 0.0) throw DomainError("series division by zero primal");
    Series inv = apply(b, [x = b[0]](int k) {
      double c = 1.0 / x;
      for (int i = 0; i < k; ++i) c *= -(i + 1) / x * 1.0;
      return c;
    });
    return a * inv;
  }
  friend Series operator/(const Series& a, double s) { return a * (1.0 / s); }
  friend Series operator/(double s, const Series& a) {
    return Series(a.order(), s) / a;
  }
  friend Series powi(const Series& f, long m) {
    if (m < 0) return Series(f.order(), 1.0) / powi(f, -m);
    Series acc(f.order(), 1.0);
    Series base = f;
    for (long e = m; e > 0; e >>= 1) {
      if (e & 1) acc = acc * base;
      if (e > 1) base = base * base;
    }
    return acc;
  }

 private:
  std::vector<double> c_;
};

inline double primal(const Series& s) { return s[0]; }

// Matrix-valued polynomial in t (monomial coefficients). Products are kept
// exact; `truncate` drops terms above a given degree.
class MatPoly {
 public:
  MatPoly() = default;
  MatPoly(int rows, int cols, int deg)
      : c_(deg + 1, MatrixXd::Zero(rows, cols)) {}
  explicit MatPoly(const MatrixXd& m) : c_(1, m) {}

  static MatPoly from_coeffs(std::vector<MatrixXd> coeffs) {
    MatPoly p;
    p.c_ = std::move(coeffs);
    return p;
  }

  int degree() const { return static_cast<int>(c_.size()) - 1; }
  int rows() const { return c_.empty() ? 0 : static_cast<int>(c_[0].rows()); }
  int cols() const { return c_.empty() ? 0 : static_cast<int>(c_[0].cols()); }
  const MatrixXd& coeff(int k) const { return c_[k]; }
  MatrixXd& coeff(int k) { return c_[k]; }
  MatrixXd coeff_or_zero(int k) const {
    return k <= degree() ? c_[k] : MatrixXd::Zero(rows(), cols());
  }

  MatrixXd eval(double t) const {
    MatrixXd acc = MatrixXd::Zero(rows(), cols());
    for (int k = degree(); k >= 0; --k) acc = acc * t + c_[k];
    return acc;
  }

  MatPoly derivative() const {
    if (degree() == 0) return MatPoly(MatrixXd::Zero(rows(), cols()));
    MatPoly d(rows(), cols(), degree() - 1);
    for (int k = 1; k <= degree(); ++k) d.c_[k - 1] = k * c_[k];
    return d;
  }

  // Term-by-term antiderivative with zero constant term.
  MatPoly antiderivative() const {
    MatPoly a(rows(), cols(), degree() + 1);
    for (int k = 0; k <= degree(); ++k) a.c_[k + 1] = c_[k] / (k + 1);
    return a;
  }

  MatPoly transpose() const {
    MatPoly r(cols(), rows(), degree());
    for (int k = 0; k <= degree(); ++k) r.c_[k] = c_[k].transpose();
    return r;
  }

  MatPoly truncate(int deg) const {
    MatPoly r(rows(), cols(), std::min(deg, degree()));
    for (int k = 0; k <= r.degree(); ++k) r.c_[k] = c_[k];
    return r;
  }

  friend MatPoly operator+(const MatPoly& a, const MatPoly& b) {
    MatPoly r(a.rows(), a.cols(), std::max(a.degree(), b.degree()));
    for (int k = 0; k <= r.degree(); ++k)
      r.c_[k] = a.coeff_or_zero(k) + b.coeff_or_zero(k);
    return r;
  }
  friend MatPoly operator-(const MatPoly& a, const MatPoly& b) {
    MatPoly r(a.rows(), a.cols(), std::max(a.degree(), b.degree()));
    for (int k = 0; k <= r.degree(); ++k)
      r.c_[k] = a.coeff_or_zero(k) - b.coeff_or_zero(k);
    return r;
  }
  friend MatPoly operator*(const MatPoly& a, const MatPoly& b) {
    MatPoly r(a.rows(), b.cols(), a.degree() + b.degree());
    for (int i = 0; i <= a.degree(); ++i)
      for (int j = 0; j <= b.degree(); ++j) r.c_[i + j] += a.c_[i] * b.c_[j];
    return r;
  }
  friend MatPoly operator*(const MatPoly& a, double s) {
    MatPoly r = a;
    for (auto& m : r.c_) m *= s;
    return r;
  }
  friend MatPoly operator*(double s, const MatPoly& a) { return a * s; }

  friend MatPoly comm(const MatPoly& x, const MatPoly& y) {
    return x * y - y * x;
  }

 private:
  std::vector<MatrixXd> c_;
};

// Least-squares polynomial fit of scalar samples on [0, span]; monomial
// coefficients returned in the unscaled variable. Fitting is done in the
// scaled variable t/span for conditioning.
inline std::vector<double> polyfit(const std::vector<double>& ts,
                                   const std::vector<double>& ys, int deg,
                                   double span) {
  const int n = static_cast<int>(ts.size());
  MatrixXd V(n, deg + 1);
  for (int i = 0; i < n; ++i) {
    double u = ts[i] / span, p = 1.0;
    for (int k = 0; k <= deg; ++k) {
      V(i, k) = p;
      p *= u;
    }
  }
  VectorXd y = Eigen::Map<const VectorXd>(ys.data(), n);
  VectorXd c = V.colPivHouseholderQr().solve(y);
  std::vector<double> out(deg + 1);
  double sc = 1.0;
  for (int k = 0; k <= deg; ++k) {
    out[k] = c[k] / sc;
    sc *= span;
  }
  return out;
}

// Matrix-valued polynomial fit from samples A(t_i).
inline MatPoly polyfit_matrix(const std::vector<double>& ts,
                              const std::vector<MatrixXd>& as, int deg,
                              double span) {
  const int r = static_cast<int>(as[0].rows());
  const int c = static_cast<int>(as[0].cols());
  MatPoly out(r, c, deg);
  std::vector<double> ys(ts.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      for (std::size_t s = 0; s < ts.size(); ++s) ys[s] = as[s](i, j);
      auto coef = polyfit(ts, ys, deg, span);
      for (int k = 0; k <= deg; ++k) out.coeff(k)(i, j) = coef[k];
    }
  return out;
}

// Picard iteration jet transport: Taylor coefficients, to order `ord`, of
// the solution of x' = f(x) through the point x0 at s = 0. Each iteration
// gains one exact order, so `ord` iterations suffice.
inline std::vector<Series> picard_transport(
    const std::function<std::vector<Series>(const std::vector<Series>&)>& rhs,
    const VectorXd& x0, int ord) {
  const int n = static_cast<int>(x0.size());
  std::vector<Series> x(n);
  for (int i = 0; i < n; ++i) x[i] = Series(ord, x0[i]);
  for (int it = 0; it < ord; ++it) {
    std::vector<Series> f = rhs(x);
    for (int i = 0; i < n; ++i) {
      Series xi = f[i].antiderivative(ord);
      xi.coeff(0) = x0[i];
      x[i] = xi;
    }
  }
  return x;
}

}  // namespace subrq
