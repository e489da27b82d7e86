#pragma once

// Linearized transition maps of the bilinear control problem driven by a
// symmetric-matrix curve A(t),
//
//   X'(t) = [0 A(t); 0 0] X(t) + sum_{i<=j} w_ij(t) [0 0; E_ij 0] X(t),
//
// with controls w in the space of symmetric directions, together with the
// end-point differential at w = 0, Gram/submersion certificates of its
// image in sp(2d), reduction of a periodic orbit's monodromy to the
// linearized return map on a transversal, and root-of-unity spectrum
// classification.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "subrq/common.hpp"
#include "subrq/jets.hpp"
#include "subrq/mane.hpp"
#include "subrq/ode.hpp"

namespace subrq::variational {

// control value at time t: one coefficient per symmetric index pair,
// ordered like sym_index_pairs(d)
using ControlFn = std::function<VectorXd(double)>;

inline MatrixXd bracket_direction(int d, int i, int j) {
  MatrixXd B = MatrixXd::Zero(2 * d, 2 * d);
  B.bottomLeftCorner(d, d) = sym_entry(d, i, j);
  return B;
}

// ---------------------------------------------------------------------------
// Transition operator: integrates the controlled problem and certifies the
// symplectic character of the path.

struct TransitionOperator {
  std::vector<double> ts;
  std::vector<MatrixXd> Ls;  // X_w at the sample times, Ls[0] = I
  MatrixXd final;            // X_w(delta)
  double sympl_defect = 0.0; // max_t |X^T J X - J|
  double det_defect = 0.0;   // |det X(delta) - 1|
};

inline TransitionOperator transition_map(const MatPoly& A, double delta,
                                         const ControlFn& w,
                                         int samples = 64,
                                         const OdeOptions& opts = {},
                                         std::vector<double> breaks = {}) {
  const int d = A.rows();
  if (A.cols() != d) throw DomainError("transition_map: A must be square");
  if (delta <= 0.0) throw DomainError("transition_map: duration must be > 0");
  const auto pairs = sym_index_pairs(d);
  std::vector<MatrixXd> basis;
  basis.reserve(pairs.size());
  for (const auto& [i, j] : pairs) basis.push_back(sym_entry(d, i, j));

  const int n = 2 * d;
  auto rhs = [&](double t, const VectorXd& y) {
    const Eigen::Map<const MatrixXd> X(y.data(), n, n);
    MatrixXd Y = MatrixXd::Zero(n, n);
    Y.topRightCorner(d, d) = A.eval(t);
    if (w) {
      const VectorXd wt = w(t);
      if (wt.size() != static_cast<int>(pairs.size()))
        throw DomainError("transition_map: control dimension mismatch");
      MatrixXd W = MatrixXd::Zero(d, d);
      for (int k = 0; k < wt.size(); ++k) W += wt[k] * basis[k];
      Y.bottomLeftCorner(d, d) = W;
    }
    MatrixXd dX = Y * X;
    return VectorXd(Eigen::Map<VectorXd>(dX.data(), n * n));
  };

  // Control kinks listed in `breaks` become segment boundaries, so the
  // integrator only ever sees a smooth right-hand side.
  std::vector<double> cuts{0.0};
  std::sort(breaks.begin(), breaks.end());
  for (double b : breaks)
    if (b > cuts.back() + 1e-12 * delta && b < delta * (1.0 - 1e-12))
      cuts.push_back(b);
  cuts.push_back(delta);

  MatrixXd X0 = MatrixXd::Identity(n, n);
  std::vector<DenseSolution> segs;
  segs.reserve(cuts.size() - 1);
  for (size_t s = 0; s + 1 < cuts.size(); ++s) {
    segs.push_back(ode_integrate(rhs, cuts[s], cuts[s + 1],
                                 Eigen::Map<VectorXd>(X0.data(), n * n),
                                 opts));
    const VectorXd yend = segs.back().eval(cuts[s + 1]);
    X0 = Eigen::Map<const MatrixXd>(yend.data(), n, n);
  }
  auto eval_at = [&](double t) {
    size_t s = 0;
    while (s + 2 < cuts.size() && t > cuts[s + 1]) ++s;
    return segs[s].eval(t);
  };

  TransitionOperator out;
  const MatrixXd J = symplectic_J(d);
  for (int k = 0; k <= samples; ++k) {
    const double t = delta * k / samples;
    const VectorXd y = eval_at(t);
    if (!y.allFinite())
      throw NumericError("transition_map: escape (non-finite state)");
    MatrixXd X = Eigen::Map<const MatrixXd>(y.data(), n, n);
    out.sympl_defect =
        std::max(out.sympl_defect, (X.transpose() * J * X - J).norm());
    out.ts.push_back(t);
    out.Ls.push_back(std::move(X));
  }
  out.final = out.Ls.back();
  out.det_defect = std::abs(out.final.determinant() - 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Submersion certificates. Columns are left-translated to the identity:
// the stored jacobian holds sp-coordinates of X(delta)^{-1} dE(0)(v), so
// rank statements live in sp(2d) with target dimension 2d^2 + d.

struct BasisControl {
  int pair = 0;    // index into sym_index_pairs(d)
  int piece = 0;   // dyadic piece
  int degree = 0;  // local monomial degree, 0..3
};

struct SubmersionCertificate {
  int d = 0;
  int dim_target = 0;   // 2d^2 + d
  int pieces = 0;       // dyadic pieces of the control grid (0: free family)
  MatrixXd jacobian;    // (2d^2+d) x ncols
  VectorXd singvals;
  int rank = 0;
  double smin_rel = 0.0;  // sigma_target / sigma_max
  std::string verdict;    // "pass" | "fail" | "indeterminate"
  bool grid_stable = true;
  double fd_max_rel_err = -1.0;  // -1: not cross-checked
  std::vector<BasisControl> basis;
};

namespace detail {

// global coefficients of the local monomial ((t-a)/h)^m, m <= 3
inline std::array<double, 4> local_monomial(double a, double h, int m) {
  std::array<double, 4> c{0, 0, 0, 0};
  double binom = 1.0;
  for (int l = m; l >= 0; --l) {
    c[l] = binom * std::pow(-a, m - l) / std::pow(h, m);
    binom = binom * l / (m - l + 1.0);
  }
  return c;
}

inline MatPoly scale_by_poly(const MatPoly& P, const std::array<double, 4>& s) {
  MatPoly out(P.rows(), P.cols(), P.degree() + 3);
  for (int k = 0; k <= P.degree(); ++k)
    for (int m = 0; m < 4; ++m)
      if (s[m] != 0.0) out.coeff(k + m) += s[m] * P.coeff(k);
  return out;
}

// polynomial integrand of the end-point differential for one symmetric
// direction E: X^{-1}(t) [0 0; E 0] X(t) with X = [I F; 0 I], F = int A
inline MatPoly column_integrand(const MatPoly& F, const MatrixXd& E) {
  const int d = F.rows();
  const MatPoly FE = F * MatPoly(E);
  const MatPoly EF = MatPoly(E) * F;
  const MatPoly FEF = FE * F;
  const int deg = FEF.degree();
  MatPoly out(2 * d, 2 * d, deg);
  for (int k = 0; k <= deg; ++k) {
    out.coeff(k).topLeftCorner(d, d) = -FE.coeff_or_zero(k);
    out.coeff(k).topRightCorner(d, d) = -FEF.coeff_or_zero(k);
    out.coeff(k).bottomRightCorner(d, d) = EF.coeff_or_zero(k);
  }
  out.coeff(0).bottomLeftCorner(d, d) = E;
  return out;
}

inline void classify_and_rank(SubmersionCertificate& cert,
                              double svd_rel_tol) {
  Eigen::JacobiSVD<MatrixXd> svd(cert.jacobian);
  cert.singvals = svd.singularValues();
  const double smax = cert.singvals.size() ? cert.singvals[0] : 0.0;
  cert.rank = 0;
  for (int k = 0; k < cert.singvals.size(); ++k)
    if (cert.singvals[k] > svd_rel_tol * smax) ++cert.rank;
  cert.smin_rel =
      (smax > 0 && cert.singvals.size() >= cert.dim_target)
          ? cert.singvals[cert.dim_target - 1] / smax
          : 0.0;
  // borderline band around the threshold is surfaced, never silently passed
  if (cert.smin_rel >= 10.0 * svd_rel_tol)
    cert.verdict = "pass";
  else if (cert.smin_rel <= 0.1 * svd_rel_tol)
    cert.verdict = "fail";
  else
    cert.verdict = "indeterminate";
}

}  // namespace detail

inline SubmersionCertificate endpoint_differential(
    const MatPoly& A, double delta, int levels = 3, bool fd_check = false,
    double svd_rel_tol = 1e-8) {
  const int d = A.rows();
  if (A.cols() != d)
    throw DomainError("endpoint_differential: A must be square");
  if (delta <= 0.0 || levels < 0)
    throw DomainError("endpoint_differential: bad grid");
  const auto pairs = sym_index_pairs(d);
  const int npairs = static_cast<int>(pairs.size());
  const int pieces = 1 << levels;
  const double h = delta / pieces;
  const MatPoly F = A.antiderivative();

  SubmersionCertificate cert;
  cert.d = d;
  cert.dim_target = 2 * d * d + d;
  cert.pieces = pieces;
  const int ncols = npairs * pieces * 4;
  cert.jacobian.resize(cert.dim_target, ncols);
  cert.basis.reserve(ncols);

  std::vector<MatPoly> integrands;
  integrands.reserve(npairs);
  for (const auto& [i, j] : pairs)
    integrands.push_back(detail::column_integrand(F, sym_entry(d, i, j)));

  std::vector<MatrixXd> columns(ncols);
  int col = 0;
  for (int p = 0; p < npairs; ++p)
    for (int piece = 0; piece < pieces; ++piece) {
      const double a = piece * h;
      for (int m = 0; m < 4; ++m) {
        const MatPoly anti =
            detail::scale_by_poly(integrands[p], detail::local_monomial(a, h, m))
                .antiderivative();
        const MatrixXd S = anti.eval(a + h) - anti.eval(a);
        columns[col] = S;
        cert.jacobian.col(col) = sp_coordinates(S, d);
        cert.basis.push_back({p, piece, m});
        ++col;
      }
    }

  if (fd_check) {
    const MatrixXd Xdelta = [&] {
      MatrixXd X = MatrixXd::Identity(2 * d, 2 * d);
      X.topRightCorner(d, d) = F.eval(delta);
      return X;
    }();
    OdeOptions tight;
    tight.rtol = 1e-12;
    tight.atol = 1e-14;
    const double eps = 1e-5;
    cert.fd_max_rel_err = 0.0;
    for (int k = 0; k < ncols; ++k) {
      const auto& b = cert.basis[k];
      const double a = b.piece * h;
      const auto mono = detail::local_monomial(a, h, b.degree);
      auto dir = [&](double sgn) {
        ControlFn w = [&, sgn](double t) {
          VectorXd v = VectorXd::Zero(npairs);
          if (t >= a && t <= a + h) {
            double val = mono[0] + t * (mono[1] + t * (mono[2] + t * mono[3]));
            v[b.pair] = sgn * eps * val;
          }
          return v;
        };
        return transition_map(A, delta, w, 1, tight, {a, a + h}).final;
      };
      const MatrixXd fd = (dir(1.0) - dir(-1.0)) / (2.0 * eps);
      const MatrixXd exact = Xdelta * columns[k];
      const double rel =
          (fd - exact).norm() / std::max(1.0, exact.norm());
      cert.fd_max_rel_err = std::max(cert.fd_max_rel_err, rel);
    }
    if (cert.fd_max_rel_err > 1e-6)
      throw NumericError(
          "endpoint_differential: finite-difference cross-check failed");
  }

  detail::classify_and_rank(cert, svd_rel_tol);
  return cert;
}

// Dyadic refinement until the rank and the relative smallest needed
// singular value stabilize within 1% across two successive grids.
inline SubmersionCertificate endpoint_differential_refined(
    const MatPoly& A, double delta, bool fd_check = false,
    double svd_rel_tol = 1e-8, int max_levels = 6) {
  SubmersionCertificate prev;
  for (int k = 1; k <= max_levels; ++k) {
    SubmersionCertificate cur =
        endpoint_differential(A, delta, k, fd_check, svd_rel_tol);
    if (k > 1 && cur.rank == prev.rank &&
        std::abs(cur.smin_rel - prev.smin_rel) <=
            0.01 * std::max(cur.smin_rel, prev.smin_rel)) {
      cur.grid_stable = true;
      return cur;
    }
    prev = std::move(cur);
  }
  prev.grid_stable = false;
  return prev;
}

// Gram test of a finite family of smooth control directions: the pushed
// directions X(delta)^{-1} d/ds|_0 X_{s w^(k)}(delta), computed by
// quadrature against the closed homogeneous solution.
inline SubmersionCertificate finite_family_submersion(
    const MatPoly& A, double delta, const std::vector<ControlFn>& family,
    int panels = 32, double svd_rel_tol = 1e-8) {
  const int d = A.rows();
  if (A.cols() != d)
    throw DomainError("finite_family_submersion: A must be square");
  if (family.empty())
    throw DomainError("finite_family_submersion: empty family");
  const auto pairs = sym_index_pairs(d);
  const int npairs = static_cast<int>(pairs.size());
  const MatPoly F = A.antiderivative();

  // 10-point Gauss-Legendre on [-1, 1]
  static const double gx[5] = {0.1488743389816312, 0.4333953941292472,
                               0.6794095682990244, 0.8650633666889845,
                               0.9739065285171717};
  static const double gw[5] = {0.2955242247147529, 0.2692667193099963,
                               0.2190863625159820, 0.1494513491505806,
                               0.0666713443086881};

  std::vector<MatrixXd> basis;
  for (const auto& [i, j] : pairs) basis.push_back(sym_entry(d, i, j));

  auto integrand = [&](const ControlFn& w, double t) {
    const VectorXd v = w(t);
    if (v.size() != npairs)
      throw DomainError("finite_family_submersion: control dimension");
    MatrixXd W = MatrixXd::Zero(d, d);
    for (int k = 0; k < npairs; ++k) W += v[k] * basis[k];
    const MatrixXd Ft = F.eval(t);
    MatrixXd S(2 * d, 2 * d);
    const MatrixXd WF = W * Ft;
    S.topLeftCorner(d, d) = -Ft * W;
    S.topRightCorner(d, d) = -Ft * WF;
    S.bottomLeftCorner(d, d) = W;
    S.bottomRightCorner(d, d) = WF;
    return S;
  };

  SubmersionCertificate cert;
  cert.d = d;
  cert.dim_target = 2 * d * d + d;
  cert.jacobian.resize(cert.dim_target, static_cast<int>(family.size()));
  const double h = delta / panels;
  for (int k = 0; k < static_cast<int>(family.size()); ++k) {
    MatrixXd S = MatrixXd::Zero(2 * d, 2 * d);
    for (int p = 0; p < panels; ++p) {
      const double c = (p + 0.5) * h, r = 0.5 * h;
      for (int g = 0; g < 5; ++g)
        S += r * gw[g] *
             (integrand(family[k], c - r * gx[g]) +
              integrand(family[k], c + r * gx[g]));
    }
    cert.jacobian.col(k) = sp_coordinates(S, d);
  }
  detail::classify_and_rank(cert, svd_rel_tol);
  return cert;
}

// ---------------------------------------------------------------------------
// Reduction of a monodromy matrix to the linearized return map on the
// symplectic complement of the plane spanned by the flow direction xi and
// the energy gradient. The output basis is Darboux, so dP is symplectic
// with respect to the standard form of half the reduced dimension.

struct PoincareReduced {
  MatrixXd dP;        // 2(m-1) x 2(m-1) for a 2m-dimensional phase space
  MatrixXd basis;     // 2m x 2(m-1), Darboux: first half u, second half v
  double sympl_defect = 0.0;
};

inline PoincareReduced poincare_reduction(const MatrixXd& M,
                                          const VectorXd& xi,
                                          const VectorXd& grad) {
  const int n2 = static_cast<int>(M.rows());
  if (M.cols() != n2 || n2 % 2 != 0 || xi.size() != n2 || grad.size() != n2)
    throw DomainError("poincare_reduction: size mismatch");
  const int m = n2 / 2;
  const MatrixXd J = symplectic_J(m);
  auto omega = [&](const VectorXd& a, const VectorXd& b) {
    return a.dot(J * b);
  };
  const double pivot = omega(xi, grad);
  if (std::abs(pivot) < 1e-12 * std::max(1.0, xi.norm() * grad.norm()))
    throw DomainError("poincare_reduction: flow/gradient plane degenerate");

  // basis of the omega-orthogonal complement of span{xi, grad}
  MatrixXd rows(2, n2);
  rows.row(0) = (J * xi).transpose();
  rows.row(1) = (J * grad).transpose();
  Eigen::JacobiSVD<MatrixXd> svd(rows, Eigen::ComputeFullV);
  MatrixXd W = svd.matrixV().rightCols(n2 - 2);

  // symplectic Gram-Schmidt into Darboux pairs
  std::vector<VectorXd> cols;
  for (int k = 0; k < W.cols(); ++k) cols.push_back(W.col(k));
  std::vector<VectorXd> us, vs;
  while (cols.size() >= 2) {
    VectorXd u = cols.front();
    cols.erase(cols.begin());
    int best = -1;
    double bestval = 0.0;
    for (int k = 0; k < static_cast<int>(cols.size()); ++k) {
      const double val = std::abs(omega(u, cols[k]));
      if (val > bestval) {
        bestval = val;
        best = k;
      }
    }
    if (best < 0 || bestval < 1e-12)
      throw NumericError("poincare_reduction: degenerate restricted form");
    VectorXd v = cols[best] / omega(u, cols[best]);
    cols.erase(cols.begin() + best);
    for (auto& b : cols) b -= omega(b, v) * u - omega(b, u) * v;
    us.push_back(u);
    vs.push_back(v);
  }

  const int half = static_cast<int>(us.size());
  PoincareReduced out;
  out.basis.resize(n2, 2 * half);
  for (int k = 0; k < half; ++k) {
    out.basis.col(k) = us[k];
    out.basis.col(half + k) = vs[k];
  }

  auto coords = [&](const VectorXd& y) {
    VectorXd c(2 * half);
    for (int k = 0; k < half; ++k) {
      c[k] = omega(y, vs[k]);
      c[half + k] = -omega(y, us[k]);
    }
    return c;
  };
  out.dP.resize(2 * half, 2 * half);
  for (int k = 0; k < 2 * half; ++k) {
    VectorXd y = M * out.basis.col(k);
    y -= (omega(y, grad) / pivot) * xi;
    out.dP.col(k) = coords(y);
  }
  const MatrixXd Jr = symplectic_J(half);
  out.sympl_defect = (out.dP.transpose() * Jr * out.dP - Jr).norm();
  return out;
}

// ---------------------------------------------------------------------------
// Root-of-unity classification of a symplectic spectrum.

struct Nondegeneracy {
  Eigen::VectorXcd eigenvalues;
  double min_root_distance = 0.0;  // min over n <= n_max of |lambda^n - 1|
  int critical_n = 0;              // n attaining the minimum
  bool degenerate = false;
  int elliptic_pairs = 0;    // on the unit circle, away from +-1
  int hyperbolic_pairs = 0;  // off the unit circle
  int parabolic_pairs = 0;   // at +-1 within tolerance
};

inline Nondegeneracy nondegeneracy(const MatrixXd& dP, int n_max = 12,
                                   double tol = 1e-6) {
  const int n2 = static_cast<int>(dP.rows());
  if (dP.cols() != n2 || n2 % 2 != 0)
    throw DomainError("nondegeneracy: matrix must be even-dimensional");
  const MatrixXd J = symplectic_J(n2 / 2);
  if ((dP.transpose() * J * dP - J).norm() > 1e-6 * std::max(1.0, dP.norm()))
    throw DomainError("nondegeneracy: symplectic defect too large");
  if (n_max < 1) throw DomainError("nondegeneracy: n_max must be >= 1");

  Nondegeneracy out;
  Eigen::EigenSolver<MatrixXd> es(dP);
  out.eigenvalues = es.eigenvalues();
  out.min_root_distance = std::numeric_limits<double>::infinity();
  for (int k = 0; k < out.eigenvalues.size(); ++k) {
    const std::complex<double> lam = out.eigenvalues[k];
    std::complex<double> pw = 1.0;
    for (int n = 1; n <= n_max; ++n) {
      pw *= lam;
      const double dist = std::abs(pw - 1.0);
      if (dist < out.min_root_distance) {
        out.min_root_distance = dist;
        out.critical_n = n;
      }
    }
    const double r = std::abs(lam);
    const bool on_circle = std::abs(r - 1.0) < tol;
    const bool upper = out.eigenvalues[k].imag() > 1e-12;
    if (on_circle && (std::abs(lam - 1.0) < tol || std::abs(lam + 1.0) < tol)) {
      out.parabolic_pairs++;  // counted twice (conjugate equals itself)
    } else if (on_circle && upper) {
      out.elliptic_pairs++;
    } else if (!on_circle && (r > 1.0)) {
      out.hyperbolic_pairs++;
    }
  }
  out.parabolic_pairs /= 2;
  out.degenerate = out.min_root_distance < tol;
  if (!out.degenerate) out.critical_n = 0;
  return out;
}

}  // namespace subrq::variational
