#pragma once
// Orbit-adapted normal form for fibered Hamiltonians on a co-rank-1
// distribution. A supercritical orbit segment is straightened to the model
// ray {(t e1, 0)} by one homogeneous and one vertical fibered symplectic
// map; the transverse fiber Hessian curve A(t) and its kernel direction
// n(t) are extracted and the defining identities are certified numerically.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "subrq/common.hpp"
#include "subrq/dynamics.hpp"
#include "subrq/jets.hpp"
#include "subrq/ode.hpp"

namespace subrq {
namespace normal_form {

// ---------------------------------------------------------------------------
// Jet containers
// ---------------------------------------------------------------------------

struct ScalarJet {
  double value = 0;
  VectorXd grad;
  MatrixXd hess;
};

// 2-jet of a map; hess[a](i, j) = d^2 value_a / dq_i dq_j.
struct MapJet {
  VectorXd value;
  MatrixXd jac;
  std::vector<MatrixXd> hess;
};

using DiffeoFn = std::function<MapJet(const VectorXd&)>;
using ScalarFieldFn = std::function<ScalarJet(const VectorXd&)>;

// Jets of the inverse map at f(z), given the jets of f at z.
inline MapJet invert_map_jet(const MapJet& f, const VectorXd& z) {
  const int n = static_cast<int>(z.size());
  MapJet inv;
  inv.value = z;
  Eigen::PartialPivLU<MatrixXd> lu(f.jac);
  MatrixXd ji = lu.inverse();
  inv.jac = ji;
  if (!f.hess.empty()) {
    inv.hess.assign(n, MatrixXd::Zero(n, n));
    for (int a = 0; a < n; ++a) {
      MatrixXd acc = MatrixXd::Zero(n, n);
      for (int b = 0; b < n; ++b) acc += ji(a, b) * f.hess[b];
      inv.hess[a] = -ji.transpose() * acc * ji;
    }
  }
  return inv;
}

// ---------------------------------------------------------------------------
// Fibered symplectic maps: compositions of
//   homogeneous  (q, p) -> (phi(q), Dphi(q)^-T p)
//   vertical     (q, p) -> (q, p + grad g(q))
// ---------------------------------------------------------------------------

struct FiberedSymplecto {
  enum class Kind { kHomogeneous, kVertical };
  struct Component {
    Kind kind;
    DiffeoFn phi;
    ScalarFieldFn g;
  };
  std::vector<Component> parts;  // applied in order parts[0], parts[1], ...

  static FiberedSymplecto homogeneous(DiffeoFn phi) {
    FiberedSymplecto f;
    f.parts.push_back({Kind::kHomogeneous, std::move(phi), nullptr});
    return f;
  }
  static FiberedSymplecto vertical(ScalarFieldFn g) {
    FiberedSymplecto f;
    f.parts.push_back({Kind::kVertical, nullptr, std::move(g)});
    return f;
  }
  FiberedSymplecto then(const FiberedSymplecto& next) const {
    FiberedSymplecto out = *this;
    out.parts.insert(out.parts.end(), next.parts.begin(), next.parts.end());
    return out;
  }

  std::pair<VectorXd, VectorXd> apply(const VectorXd& q,
                                      const VectorXd& p) const {
    return apply_with_jacobian(q, p, nullptr);
  }

  // Full phase-space Jacobian is assembled from the component jets when
  // `jac` is non-null.
  std::pair<VectorXd, VectorXd> apply_with_jacobian(const VectorXd& q,
                                                    const VectorXd& p,
                                                    MatrixXd* jac) const {
    const int n = static_cast<int>(q.size());
    VectorXd cq = q, cp = p;
    MatrixXd total;
    if (jac) total = MatrixXd::Identity(2 * n, 2 * n);
    for (const auto& part : parts) {
      MatrixXd step(2 * n, 2 * n);
      if (part.kind == Kind::kVertical) {
        ScalarJet g = part.g(cq);
        cp = cp + g.grad;
        if (jac) {
          step.setIdentity();
          step.block(n, 0, n, n) = g.hess;
        }
      } else {
        MapJet m = part.phi(cq);
        Eigen::PartialPivLU<MatrixXd> lu(m.jac);
        MatrixXd jit = lu.inverse().transpose();
        VectorXd np = jit * cp;
        if (jac) {
          step.setZero();
          step.topLeftCorner(n, n) = m.jac;
          step.bottomRightCorner(n, n) = jit;
          // d/dq_b of (Dphi^-T p) = -Dphi^-T (d_b Dphi^T) Dphi^-T p, with
          // (d_b Dphi^T)(a, i) = hess_i(a, b).
          for (int b = 0; b < n; ++b) {
            VectorXd vb = VectorXd::Zero(n);
            for (int i = 0; i < n; ++i) vb += np[i] * m.hess[i].col(b);
            step.block(n, 0, n, n).col(b) = -jit * vb;
          }
        }
        cq = m.value;
        cp = np;
      }
      if (jac) total = step * total;
    }
    if (jac) *jac = total;
    return {cq, cp};
  }

  // || J^T Omega J - Omega || for the assembled phase Jacobian at (q, p).
  double symplectic_defect(const VectorXd& q, const VectorXd& p) const {
    const int n = static_cast<int>(q.size());
    MatrixXd jac;
    apply_with_jacobian(q, p, &jac);
    MatrixXd omega = symplectic_J(n);
    return (jac.transpose() * omega * jac - omega).norm();
  }
};

namespace detail {

// Orthonormal basis of the hyperplane orthogonal to v, with deterministic
// column signs (largest-magnitude entry positive).
inline MatrixXd complement_basis(const VectorXd& v) {
  const int n = static_cast<int>(v.size());
  MatrixXd col = v;
  Eigen::HouseholderQR<MatrixXd> qr(col);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, n);
  MatrixXd out = q.rightCols(n - 1);
  for (int j = 0; j < out.cols(); ++j) {
    int piv = 0;
    out.col(j).cwiseAbs().maxCoeff(&piv);
    if (out(piv, j) < 0) out.col(j) = -out.col(j);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// linear_normalize: orthogonal diagonalization of the transverse fiber
// Hessian at the base point, rescaled so the positive part becomes the
// identity. Requires a positive-semidefinite matrix with one-dimensional
// kernel; eigenvalues are sorted descending and the kernel direction is
// sign-fixed by the positivity of its last nonzero component.
// ---------------------------------------------------------------------------

struct LinearNormalizeResult {
  MatrixXd Mbar;     // d x d, Mbar * A * Mbar^T = diag(1, ..., 1, 0)
  MatrixXd G;        // orthogonal; rows are eigenvectors, descending
  VectorXd lambda;   // eigenvalues, descending
};

inline LinearNormalizeResult linear_normalize(const MatrixXd& a,
                                              double rel_tol = 1e-9) {
  const int d = static_cast<int>(a.rows());
  if (a.cols() != d || d < 1) throw DomainError("linear_normalize: square matrix required");
  if ((a - a.transpose()).norm() > 1e-9 * std::max(1.0, a.norm()))
    throw DomainError("linear_normalize: matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
  VectorXd lam = es.eigenvalues().reverse();
  MatrixXd vec(d, d);
  for (int j = 0; j < d; ++j) vec.col(j) = es.eigenvectors().col(d - 1 - j);
  const double scale = std::max(std::abs(lam[0]), 1e-300);
  if (lam[d - 1] < -rel_tol * std::max(1.0, scale))
    throw DomainError("linear_normalize: matrix is not positive semidefinite");
  if (std::abs(lam[d - 1]) > rel_tol * std::max(1.0, scale))
    throw DomainError("linear_normalize: kernel is absent (full-rank matrix)");
  for (int j = 0; j + 1 < d; ++j)
    if (lam[j] < rel_tol * std::max(1.0, scale))
      throw DomainError("linear_normalize: kernel dimension exceeds one");
  // Deterministic eigenvector signs: generic columns by their largest entry,
  // the kernel column by its last nonzero component.
  for (int j = 0; j + 1 < d; ++j) {
    int piv = 0;
    vec.col(j).cwiseAbs().maxCoeff(&piv);
    if (vec(piv, j) < 0) vec.col(j) = -vec.col(j);
  }
  int last = d - 1;
  while (last > 0 && std::abs(vec(last, d - 1)) < 1e-12) --last;
  if (vec(last, d - 1) < 0) vec.col(d - 1) = -vec.col(d - 1);

  LinearNormalizeResult out;
  out.lambda = lam;
  out.G = vec.transpose();
  VectorXd diag(d);
  for (int j = 0; j + 1 < d; ++j) diag[j] = 1.0 / std::sqrt(lam[j]);
  diag[d - 1] = 1.0;
  out.Mbar = diag.asDiagonal() * out.G;
  return out;
}

// ---------------------------------------------------------------------------
// Characteristic bundle: the orbit together with first and second transverse
// variations of the family of characteristics emanating from a section
// through the base point, and transverse jets of the generating value g.
// ---------------------------------------------------------------------------

struct CharPoint {
  VectorXd x, p;   // characteristic phase point
  MatrixXd V;      // 2n x d first variations
  MatrixXd S;      // 2n x np second variations (np = d(d+1)/2 pairs)
  double g = 0;    // accumulated action value
  VectorXd gy;     // d transverse first derivatives of g
  MatrixXd gyy;    // d x d transverse Hessian of g
};

struct CharacteristicBundle {
  std::shared_ptr<const Hamiltonian> H;
  int n = 0;        // ambient dimension
  int d = 0;        // transverse dimension, n - 1
  double delta = 0;
  double level = 0;
  VectorXd nstar;   // unit momentum direction at the base point
  double s0 = 0;    // momentum magnitude solving the level condition
  MatrixXd N;       // n x d orthonormal section frame, N^T nstar = 0
  VectorXd s_lin;   // first-order jets of the momentum magnitude
  MatrixXd s_quad;  // second-order jets
  DenseSolution sol;
  double hj_residual = 0;  // transverse order-2 defect of the level identity

  CharPoint at(double t) const {
    const int D = 2 * n;
    const int np = d * (d + 1) / 2;
    VectorXd y = sol.eval(t);
    CharPoint c;
    c.x = y.segment(0, n);
    c.p = y.segment(n, n);
    c.V = Eigen::Map<const MatrixXd>(y.data() + D, D, d);
    c.S = Eigen::Map<const MatrixXd>(y.data() + D * (1 + d), D, np);
    const int gb = D * (1 + d + np);
    c.g = y[gb];
    c.gy = y.segment(gb + 1, d);
    c.gyy = MatrixXd::Zero(d, d);
    auto pairs = sym_index_pairs(d);
    for (int m = 0; m < np; ++m) {
      auto [i, j] = pairs[m];
      c.gyy(i, j) = c.gyy(j, i) = y[gb + 1 + d + m];
    }
    return c;
  }
};

namespace detail {

// Time derivatives of every block of the augmented characteristic state,
// plus the order-3 phase jet they were assembled from.
struct CharDerivs {
  JetValue jet;
  VectorXd zdot;    // 2n
  MatrixXd Vdot;    // 2n x d
  MatrixXd Sdot;    // 2n x np
  double gdot = 0;
  VectorXd gydot;   // d
  MatrixXd gyydot;  // d x d
};

inline VectorXd apply_J(const VectorXd& w, int n) {
  VectorXd out(2 * n);
  out.head(n) = w.tail(n);
  out.tail(n) = -w.head(n);
  return out;
}

inline CharDerivs char_derivs(const Hamiltonian& H, const CharPoint& c) {
  const int n = static_cast<int>(c.x.size());
  const int d = n - 1;
  const int np = d * (d + 1) / 2;
  CharDerivs out;
  out.jet = H.phase_jet(c.x, c.p, 3);
  const VectorXd& grad = out.jet.grad;
  const MatrixXd& hess = out.jet.hess;
  out.zdot = apply_J(grad, n);
  out.Vdot.resize(2 * n, d);
  for (int j = 0; j < d; ++j) out.Vdot.col(j) = apply_J(hess * c.V.col(j), n);
  out.Sdot.resize(2 * n, np);
  auto pairs = sym_index_pairs(d);
  for (int m = 0; m < np; ++m) {
    auto [j, k] = pairs[m];
    VectorXd w = hess * c.S.col(m) +
                 out.jet.third.contract_last(c.V.col(k)) * c.V.col(j);
    out.Sdot.col(m) = apply_J(w, n);
  }
  VectorXd h = grad.tail(n);
  out.gdot = c.p.dot(h);
  out.gydot.resize(d);
  for (int j = 0; j < d; ++j) {
    VectorXd hv = (hess * c.V.col(j)).tail(n);
    out.gydot[j] = c.V.col(j).tail(n).dot(h) + c.p.dot(hv);
  }
  out.gyydot = MatrixXd::Zero(d, d);
  for (int m = 0; m < np; ++m) {
    auto [j, k] = pairs[m];
    VectorXd hj = (hess * c.V.col(j)).tail(n);
    VectorXd hk = (hess * c.V.col(k)).tail(n);
    VectorXd w = (hess * c.S.col(m) +
                  out.jet.third.contract_last(c.V.col(k)) * c.V.col(j))
                     .tail(n);
    double v = c.S.col(m).tail(n).dot(h) + c.V.col(j).tail(n).dot(hk) +
               c.V.col(k).tail(n).dot(hj) + c.p.dot(w);
    out.gyydot(j, k) = out.gyydot(k, j) = v;
  }
  return out;
}

// Order-2 transverse model of the characteristic family at (t, yhat):
// phase point, straightening frame [dx/dt | dx/dyhat], and covector.
struct ModelPoint {
  VectorXd x, p;
  MatrixXd frame;  // n x n
};

inline ModelPoint model_at(const CharacteristicBundle& b, const CharPoint& c,
                           const CharDerivs& der, const VectorXd& yhat) {
  const int n = b.n;
  const int d = b.d;
  auto pairs = sym_index_pairs(d);
  const int np = static_cast<int>(pairs.size());
  VectorXd quad = VectorXd::Zero(2 * n);
  MatrixXd Syhat = MatrixXd::Zero(2 * n, d);  // columns: sum_k S_(jk) yhat_k
  VectorXd quad_dot = VectorXd::Zero(2 * n);
  for (int m = 0; m < np; ++m) {
    auto [j, k] = pairs[m];
    double w = yhat[j] * yhat[k] * (j == k ? 1.0 : 2.0);
    quad += 0.5 * w * c.S.col(m);
    quad_dot += 0.5 * w * der.Sdot.col(m);
    Syhat.col(j) += c.S.col(m) * yhat[k];
    if (j != k) Syhat.col(k) += c.S.col(m) * yhat[j];
  }
  VectorXd z = VectorXd::Zero(2 * n);
  z.head(n) = c.x;
  z.tail(n) = c.p;
  VectorXd zm = z + c.V * yhat + quad;
  VectorXd zdotm = der.zdot + der.Vdot * yhat + quad_dot;
  ModelPoint out;
  out.x = zm.head(n);
  out.p = zm.tail(n);
  out.frame.resize(n, n);
  out.frame.col(0) = zdotm.head(n);
  out.frame.rightCols(d) = c.V.topRows(n) + Syhat.topRows(n);
  return out;
}

}  // namespace detail

// Characteristic construction on the level set {H = level}: a section
// through q0 transverse to the momentum ray through p0 is equipped with the
// unique nearby covector field lambda(yhat) = s(yhat) nstar on the level,
// and the characteristics, their first/second transverse variations and the
// action jets are integrated over [0, delta].
inline CharacteristicBundle solve_hj_jets(const Hamiltonian& H,
                                          const VectorXd& q0,
                                          const VectorXd& p0, double level,
                                          double delta,
                                          const OdeOptions& opts = {}) {
  const int n = H.dim();
  if (q0.size() != n || p0.size() != n)
    throw DomainError("solve_hj_jets: dimension mismatch");
  if (!(delta > 0)) throw DomainError("solve_hj_jets: nonpositive span");
  const int d = n - 1;
  if (d < 1) throw DomainError("solve_hj_jets: ambient dimension must exceed one");
  const double pn = p0.norm();
  if (pn < 1e-12) throw DomainError("solve_hj_jets: vanishing base momentum");

  CharacteristicBundle b;
  b.H = std::make_shared<Hamiltonian>(H);
  b.n = n;
  b.d = d;
  b.delta = delta;
  b.level = level;
  b.nstar = p0 / pn;

  // Newton along the momentum ray for H(q0, s nstar) = level.
  double s = pn;
  bool ok = false;
  for (int it = 0; it < 60; ++it) {
    JetValue j = H.phase_jet(q0, s * b.nstar, 1);
    double f = j.value - level;
    if (std::abs(f) < 1e-13 * std::max(1.0, std::abs(level))) {
      ok = true;
      break;
    }
    double df = j.grad.tail(n).dot(b.nstar);
    if (!std::isfinite(f) || std::abs(df) < 1e-14)
      throw NumericError("solve_hj_jets: level equation is degenerate along the ray");
    double step = f / df;
    if (!std::isfinite(step)) throw NumericError("solve_hj_jets: Newton diverged");
    s -= step;
    if (!(std::abs(s) < 1e8))
      throw NumericError("solve_hj_jets: no covector on the requested level");
  }
  if (!ok) throw NumericError("solve_hj_jets: Newton did not converge to the level");
  b.s0 = s;
  VectorXd pbar = s * b.nstar;

  b.N = detail::complement_basis(b.nstar);

  // Implicit jets of s(yhat) from H(q0 + N yhat, s nstar) = level.
  JetValue j2 = H.phase_jet(q0, pbar, 2);
  double bb = j2.grad.tail(n).dot(b.nstar);
  if (std::abs(bb) < 1e-10)
    throw DomainError("solve_hj_jets: orbit velocity is tangent to the section");
  MatrixXd hqq = j2.hess.topLeftCorner(n, n);
  MatrixXd hqp = j2.hess.topRightCorner(n, n);
  MatrixXd hpp = j2.hess.bottomRightCorner(n, n);
  VectorXd a(d);
  for (int j = 0; j < d; ++j) a[j] = j2.grad.head(n).dot(b.N.col(j));
  b.s_lin = -a / bb;
  VectorXd fys(d);
  for (int j = 0; j < d; ++j) fys[j] = b.N.col(j).dot(hqp * b.nstar);
  double fss = b.nstar.dot(hpp * b.nstar);
  b.s_quad.resize(d, d);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) {
      double fyy = b.N.col(j).dot(hqq * b.N.col(k));
      b.s_quad(j, k) = -(fyy + fys[j] * b.s_lin[k] + fys[k] * b.s_lin[j] +
                         fss * b.s_lin[j] * b.s_lin[k]) /
                       bb;
    }

  const int D = 2 * n;
  auto pairs = sym_index_pairs(d);
  const int np = static_cast<int>(pairs.size());
  const int gb = D * (1 + d + np);
  VectorXd y0 = VectorXd::Zero(gb + 1 + d + np);
  y0.segment(0, n) = q0;
  y0.segment(n, n) = pbar;
  for (int j = 0; j < d; ++j) {
    y0.segment(D + j * D, n) = b.N.col(j);
    y0.segment(D + j * D + n, n) = b.s_lin[j] * b.nstar;
  }
  for (int m = 0; m < np; ++m) {
    auto [j, k] = pairs[m];
    y0.segment(D * (1 + d) + m * D + n, n) = b.s_quad(j, k) * b.nstar;
  }

  Hamiltonian ham = H;
  auto rhs = [ham, n, d, np, pairs, D, gb](double, const VectorXd& y) {
    CharPoint c;
    c.x = y.segment(0, n);
    c.p = y.segment(n, n);
    c.V = Eigen::Map<const MatrixXd>(y.data() + D, D, d);
    c.S = Eigen::Map<const MatrixXd>(y.data() + D * (1 + d), D, np);
    detail::CharDerivs der = detail::char_derivs(ham, c);
    VectorXd dy(y.size());
    dy.segment(0, D) = der.zdot;
    Eigen::Map<MatrixXd>(dy.data() + D, D, d) = der.Vdot;
    Eigen::Map<MatrixXd>(dy.data() + D * (1 + d), D, np) = der.Sdot;
    dy[gb] = der.gdot;
    dy.segment(gb + 1, d) = der.gydot;
    for (int m = 0; m < np; ++m) {
      auto [j, k] = pairs[m];
      dy[gb + 1 + d + m] = der.gyydot(j, k);
    }
    return dy;
  };
  b.sol = ode_integrate(rhs, 0.0, delta, y0, opts);

  // Order-2 jet defect of H(chi, mu) = level along the segment.
  double res = 0;
  for (int i = 0; i <= 8; ++i) {
    double t = delta * i / 8.0;
    CharPoint c = b.at(t);
    JetValue jj = ham.phase_jet(c.x, c.p, 2);
    res = std::max(res, std::abs(jj.value - level));
    for (int j = 0; j < d; ++j)
      res = std::max(res, std::abs(jj.grad.dot(c.V.col(j))));
    for (int m = 0; m < np; ++m) {
      auto [j, k] = pairs[m];
      double second = c.V.col(j).dot(jj.hess * c.V.col(k)) +
                      jj.grad.dot(c.S.col(m));
      res = std::max(res, std::abs(second));
    }
  }
  b.hj_residual = res;
  return b;
}

// ---------------------------------------------------------------------------
// straighten_orbit: tubular chart along the configuration projection of an
// orbit. The inverse chart is psi(t, yhat) = Q(t) + N yhat with a constant
// orthonormal complement N of the initial velocity; the forward chart is a
// Newton inversion carrying jets to order two.
// ---------------------------------------------------------------------------

struct StraightenedOrbit {
  FiberedSymplecto chart;  // homogeneous part built from `straighten`
  DiffeoFn straighten;     // x -> (t, yhat)
  DiffeoFn tube;           // (t, yhat) -> x
  MatrixXd N;
  double delta = 0;
};

inline StraightenedOrbit straighten_orbit(const Hamiltonian& H,
                                          const PhaseOrbit& orbit,
                                          double delta) {
  const int n = H.dim();
  if (!(delta > 0) || delta > orbit.T + 1e-12)
    throw DomainError("straighten_orbit: span outside the orbit window");
  VectorXd q0 = orbit.q0(), p0 = orbit.p0();
  JetValue j0 = H.phase_jet(q0, p0, 1);
  VectorXd v0 = j0.grad.tail(n);
  if (v0.norm() < 1e-8)
    throw DomainError("straighten_orbit: orbit velocity vanishes at the base point");
  MatrixXd N = detail::complement_basis(v0 / v0.norm());

  Hamiltonian ham = H;
  DenseSolution z = orbit.z;
  auto tube = [ham, z, N, n](const VectorXd& u) {
    double t = u[0];
    VectorXd yhat = u.tail(n - 1);
    VectorXd zt = z.eval(t);
    VectorXd q = zt.head(n), p = zt.tail(n);
    JetValue jet = ham.phase_jet(q, p, 2);
    VectorXd qdot = jet.grad.tail(n);
    VectorXd pdot = -jet.grad.head(n);
    VectorXd zdot(2 * n);
    zdot << qdot, pdot;
    VectorXd qddot = (jet.hess * zdot).tail(n);
    MapJet out;
    out.value = q + N * yhat;
    out.jac.resize(n, n);
    out.jac.col(0) = qdot;
    out.jac.rightCols(n - 1) = N;
    out.hess.assign(n, MatrixXd::Zero(n, n));
    for (int a = 0; a < n; ++a) out.hess[a](0, 0) = qddot[a];
    return out;
  };

  VectorXd vq0 = q0;
  VectorXd vel0 = v0;
  auto straighten = [tube, vq0, vel0, n, delta](const VectorXd& x) {
    VectorXd u(n);
    u[0] = std::clamp(vel0.dot(x - vq0) / vel0.squaredNorm(), 0.0, delta);
    u.tail(n - 1).setZero();
    MapJet fwd;
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
      fwd = tube(u);
      VectorXd r = fwd.value - x;
      if (r.norm() < 1e-13 * std::max(1.0, x.norm())) {
        converged = true;
        break;
      }
      VectorXd step = fwd.jac.partialPivLu().solve(r);
      if (!step.allFinite())
        throw NumericError("straighten_orbit: chart inversion diverged");
      u -= step;
    }
    if (!converged)
      throw NumericError("straighten_orbit: point outside the tubular chart");
    return invert_map_jet(fwd, u);
  };

  StraightenedOrbit out;
  out.N = N;
  out.delta = delta;
  out.tube = tube;
  out.straighten = straighten;
  out.chart = FiberedSymplecto::homogeneous(straighten);
  return out;
}

// ---------------------------------------------------------------------------
// flow_box: rectification of a vector field near the origin. The inverse
// chart flows the complement section of X(0); jets to order two are carried
// by first and second variations of the flow.
// ---------------------------------------------------------------------------

struct FlowBox {
  FiberedSymplecto chart;  // homogeneous part built from `straighten`
  DiffeoFn straighten;     // x -> (t, yhat), rectifies the field to e1
  DiffeoFn tube;           // (t, yhat) -> x
  MatrixXd N;
};

inline FlowBox flow_box(const DiffeoFn& field, int dim,
                        const OdeOptions& opts = {}) {
  const int n = dim;
  const int d = n - 1;
  auto pairs = sym_index_pairs(d);
  const int np = static_cast<int>(pairs.size());
  MapJet f0 = field(VectorXd::Zero(n));
  if (f0.value.norm() < 1e-10)
    throw DomainError("flow_box: field vanishes at the base point");
  MatrixXd N = detail::complement_basis(f0.value / f0.value.norm());

  // State: x (n), W = dx/dyhat (n x d), Z = second variations (n x np).
  auto rhs = [field, n, d, np, pairs](double, const VectorXd& y) {
    VectorXd x = y.head(n);
    MatrixXd W = Eigen::Map<const MatrixXd>(y.data() + n, n, d);
    MatrixXd Z = Eigen::Map<const MatrixXd>(y.data() + n * (1 + d), n, np);
    MapJet f = field(x);
    VectorXd dy(y.size());
    dy.head(n) = f.value;
    MatrixXd dW = f.jac * W;
    Eigen::Map<MatrixXd>(dy.data() + n, n, d) = dW;
    for (int m = 0; m < np; ++m) {
      auto [j, k] = pairs[m];
      VectorXd second(n);
      for (int a = 0; a < n; ++a)
        second[a] = W.col(j).dot(f.hess[a] * W.col(k));
      dy.segment(n * (1 + d) + m * n, n) = f.jac * Z.col(m) + second;
    }
    return dy;
  };

  auto tube = [rhs, field, N, n, d, np, pairs, opts](const VectorXd& u) {
    double t = u[0];
    VectorXd yhat = u.tail(d);
    VectorXd y0 = VectorXd::Zero(n * (1 + d + np));
    y0.head(n) = N * yhat;
    Eigen::Map<MatrixXd>(y0.data() + n, n, d) = N;
    DenseSolution sol = ode_integrate(rhs, 0.0, t, y0, opts);
    VectorXd y = sol.eval(t);
    VectorXd x = y.head(n);
    MatrixXd W = Eigen::Map<const MatrixXd>(y.data() + n, n, d);
    MatrixXd Z = Eigen::Map<const MatrixXd>(y.data() + n * (1 + d), n, np);
    MapJet f = field(x);
    MapJet out;
    out.value = x;
    out.jac.resize(n, n);
    out.jac.col(0) = f.value;
    out.jac.rightCols(d) = W;
    out.hess.assign(n, MatrixXd::Zero(n, n));
    MatrixXd dtd = f.jac * W;  // d/dyhat of the time derivative
    for (int a = 0; a < n; ++a) {
      out.hess[a](0, 0) = (f.jac * f.value)[a];
      for (int j = 0; j < d; ++j) {
        out.hess[a](0, j + 1) = dtd(a, j);
        out.hess[a](j + 1, 0) = dtd(a, j);
      }
    }
    for (int m = 0; m < np; ++m) {
      auto [j, k] = pairs[m];
      for (int a = 0; a < n; ++a) {
        out.hess[a](j + 1, k + 1) = Z(a, m);
        out.hess[a](k + 1, j + 1) = Z(a, m);
      }
    }
    return out;
  };

  VectorXd x0dir = f0.value;
  auto straighten = [tube, x0dir, N, n](const VectorXd& x) {
    VectorXd u(n);
    u[0] = x0dir.dot(x) / x0dir.squaredNorm();
    u.tail(n - 1) = N.transpose() * x;
    MapJet fwd;
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
      fwd = tube(u);
      VectorXd r = fwd.value - x;
      if (r.norm() < 1e-13 * std::max(1.0, x.norm())) {
        converged = true;
        break;
      }
      VectorXd step = fwd.jac.partialPivLu().solve(r);
      if (!step.allFinite()) throw NumericError("flow_box: inversion diverged");
      u -= step;
    }
    if (!converged) throw NumericError("flow_box: point outside the chart");
    return invert_map_jet(fwd, u);
  };

  FlowBox out;
  out.N = N;
  out.tube = tube;
  out.straighten = straighten;
  out.chart = FiberedSymplecto::homogeneous(straighten);
  return out;
}

// ---------------------------------------------------------------------------
// normal_form: full pipeline. The homogeneous and vertical steps collapse
// (the vertical shift commutes past the straightening) into a single pair
// built from the characteristic bundle; a final linear step normalizes the
// transverse fiber Hessian at the base point.
// ---------------------------------------------------------------------------

struct NormalFormOptions {
  int grid_points = 33;
  int sample_dirs = 4;         // certification rays per grid node
  double sample_radius = 1e-3; // transverse certification radius
  double min_delta = 1e-3;     // smallest admissible span when halving
  int fit_degree = 8;
  OdeOptions ode;
  unsigned seed = 2026;
  std::function<VectorXd(const VectorXd&)> annihilator;  // optional
};

struct NormalFormData {
  int d = 0;
  double delta = 0;
  double level = 0;
  VectorXd grid;
  std::vector<MatrixXd> A;       // transverse fiber Hessian along the orbit
  MatPoly A_jet;                 // least-squares polynomial of A(t)
  std::vector<VectorXd> n;       // unit kernel curve, n(0) = e_d
  std::vector<VectorXd> n_tilde; // transported annihilator direction (d+1)
  VectorXd ndot0;
  double ndot0_norm = 0;
  MatrixXd M;                    // final linear step, block diag(1, Mbar)
  FiberedSymplecto Phi;          // normal-form chart -> original phase space
  CharacteristicBundle chars;
  std::vector<MatrixXd> B;       // full fiber Hessian in new coordinates
  std::vector<VectorXd> dg;      // gradient of the vertical shift along orbit
  std::vector<ScalarJet> g_jets; // transverse jets of the shift
  // certification
  double res_orbit = 0;     // (a) the orbit maps to the model ray
  double res_level = 0;     // (b) the zero section lies on the level
  double res_velocity = 0;  // (c) fiber derivative equals e1 on the section
  double res_hessian = 0;   // (d) normalized Hessian at the base point
  double res_kernel = 0;    // A(t) annihilates the transported direction
  double res_hj = 0;        // level identity jet defect
  double rank_margin = 0;   // smallest sigma_{d-1}/sigma_1 of A(t)
};

namespace detail {

struct NodeData {
  CharPoint cp;
  CharDerivs der;
  MatrixXd dchi;     // n x n straightening frame [xdot | Vx]
  MatrixXd dchi_inv;
  MatrixXd b_pre;    // dchi_inv Hpp dchi_inv^T
  VectorXd g_pre;    // dchi^T p
};

inline NodeData node_data(const Hamiltonian& H, const CharacteristicBundle& b,
                          double t) {
  NodeData nd;
  nd.cp = b.at(t);
  nd.der = char_derivs(H, nd.cp);
  const int n = b.n;
  nd.dchi.resize(n, n);
  nd.dchi.col(0) = nd.der.zdot.head(n);
  nd.dchi.rightCols(b.d) = nd.cp.V.topRows(n);
  Eigen::JacobiSVD<MatrixXd> svd(nd.dchi);
  double smin = svd.singularValues().minCoeff();
  double smax = svd.singularValues().maxCoeff();
  if (!(smin > 1e-8 * smax))
    throw NumericError("normal_form: straightening frame degenerates");
  nd.dchi_inv = nd.dchi.partialPivLu().inverse();
  MatrixXd hpp = nd.der.jet.hess.bottomRightCorner(n, n);
  nd.b_pre = nd.dchi_inv * hpp * nd.dchi_inv.transpose();
  nd.g_pre = nd.dchi.transpose() * nd.cp.p;
  return nd;
}

}  // namespace detail

inline NormalFormData normal_form(const Hamiltonian& H,
                                  const PhaseOrbit& orbit, double delta,
                                  const NormalFormOptions& opts = {}) {
  const int n = H.dim();
  const int d = n - 1;
  if (!(delta > 0) || delta > orbit.T + 1e-12)
    throw DomainError("normal_form: span outside the orbit window");

  std::string last_err;
  for (double span = delta; span >= opts.min_delta * (1 - 1e-12); span /= 2) {
    try {
      CharacteristicBundle bundle = solve_hj_jets(
          H, orbit.q0(), orbit.p0(), orbit.level, span, opts.ode);

      const int G = std::max(3, opts.grid_points);
      std::vector<double> ts(G);
      std::vector<detail::NodeData> nodes(G);
      for (int i = 0; i < G; ++i) {
        ts[i] = span * i / (G - 1);
        nodes[i] = detail::node_data(H, bundle, ts[i]);
      }

      MatrixXd abar0 = nodes[0].b_pre.bottomRightCorner(d, d);
      LinearNormalizeResult lin = linear_normalize(abar0, 1e-6);
      MatrixXd M = MatrixXd::Identity(n, n);
      M.bottomRightCorner(d, d) = lin.Mbar;
      MatrixXd Minv = M.partialPivLu().inverse();
      MatrixXd MbarInv = lin.Mbar.partialPivLu().inverse();

      NormalFormData out;
      out.d = d;
      out.delta = span;
      out.level = orbit.level;
      out.M = M;
      out.grid = Eigen::Map<const VectorXd>(ts.data(), G);

      std::vector<MatrixXd> As(G);
      out.B.resize(G);
      out.dg.resize(G);
      out.g_jets.resize(G);
      out.n_tilde.resize(G);
      out.n.resize(G);
      for (int i = 0; i < G; ++i) {
        out.B[i] = M * nodes[i].b_pre * M.transpose();
        As[i] = out.B[i].bottomRightCorner(d, d);
        out.dg[i] = Minv.transpose() * nodes[i].g_pre;
        ScalarJet gj;
        gj.value = nodes[i].cp.g;
        gj.grad = MbarInv.transpose() * nodes[i].cp.gy;
        gj.hess = MbarInv.transpose() * nodes[i].cp.gyy * MbarInv;
        out.g_jets[i] = gj;

        VectorXd w;
        if (opts.annihilator) {
          w = Minv.transpose() * nodes[i].dchi.transpose() *
              opts.annihilator(nodes[i].cp.x);
        } else {
          Eigen::JacobiSVD<MatrixXd> svd(out.B[i], Eigen::ComputeFullV);
          w = svd.matrixV().col(n - 1);
        }
        w.normalize();
        if (i == 0 ? w[n - 1] < 0 : w.dot(out.n_tilde[i - 1]) < 0) w = -w;
        out.n_tilde[i] = w;
        out.n[i] = w.tail(d).normalized();
      }
      out.A = As;
      out.A_jet = polyfit_matrix(ts, As, std::min(opts.fit_degree, G - 1), span);
      out.chars = bundle;

      // Kernel curve derivative at t = 0 from a short-window fit.
      {
        int m = std::min(G, 7);
        std::vector<double> tt(ts.begin(), ts.begin() + m);
        std::vector<MatrixXd> nn(m);
        for (int i = 0; i < m; ++i) nn[i] = out.n[i];
        MatPoly nfit = polyfit_matrix(tt, nn, std::min(3, m - 1), tt.back());
        out.ndot0 = nfit.derivative().eval(0.0).col(0);
        out.ndot0_norm = out.ndot0.norm();
      }

      // Residuals. (a): the chart sends the model ray back onto the orbit.
      double ra = 0;
      for (int i = 0; i < G; ++i) {
        VectorXd z = orbit.z.eval(ts[i]);
        ra = std::max(ra, (nodes[i].cp.x - z.head(n)).norm());
        ra = std::max(ra, (nodes[i].cp.p - z.tail(n)).norm());
      }
      out.res_orbit = ra;

      // (b), (c) and the vertical-shift identity, sampled on transverse rays.
      std::mt19937 rng(opts.seed);
      std::normal_distribution<double> gauss;
      double rb = bundle.hj_residual, rc = 0;
      for (int i = 0; i < G; ++i) {
        for (int sdir = 0; sdir <= opts.sample_dirs; ++sdir) {
          VectorXd yhat = VectorXd::Zero(d);
          if (sdir > 0) {
            VectorXd u(d);
            for (int j = 0; j < d; ++j) u[j] = gauss(rng);
            yhat = MbarInv * (opts.sample_radius * u.normalized());
          }
          detail::ModelPoint mp =
              detail::model_at(bundle, nodes[i].cp, nodes[i].der, yhat);
          JetValue j1 = H.phase_jet(mp.x, mp.p, 1);
          rb = std::max(rb, std::abs(j1.value - orbit.level));
          VectorXd vel = M * mp.frame.partialPivLu().solve(j1.grad.tail(n));
          vel[0] -= 1.0;
          rc = std::max(rc, vel.norm());
        }
      }
      out.res_level = rb;
      out.res_velocity = rc;
      out.res_hj = bundle.hj_residual;

      MatrixXd target = MatrixXd::Zero(d, d);
      target.topLeftCorner(d - 1, d - 1).setIdentity();
      out.res_hessian = (As[0] - target).norm();

      double rk = 0, margin = 1e300;
      for (int i = 0; i < G; ++i) {
        rk = std::max(rk, (As[i] * out.n[i]).norm());
        Eigen::JacobiSVD<MatrixXd> svd(As[i]);
        VectorXd sv = svd.singularValues();
        int idx = d >= 2 ? d - 2 : 0;
        margin = std::min(margin, sv[idx] / std::max(out.B[i].norm(), 1e-300));
      }
      out.res_kernel = rk;
      out.rank_margin = margin;

      // The chart: vertical shift by the action jets, then the homogeneous
      // straightening composed with the final linear step.
      Hamiltonian ham = H;
      CharacteristicBundle bcopy = bundle;
      MatrixXd MbarInvC = MbarInv, MinvC = Minv;
      auto vertical = [ham, bcopy, MbarInvC, n, d](const VectorXd& q) {
        double t = q[0];
        VectorXd yh = MbarInvC * q.tail(d);
        CharPoint c = bcopy.at(t);
        detail::CharDerivs der = detail::char_derivs(ham, c);
        ScalarJet out;
        out.value = c.g + c.gy.dot(yh) + 0.5 * yh.dot(c.gyy * yh);
        double dt = der.gdot + der.gydot.dot(yh) + 0.5 * yh.dot(der.gyydot * yh);
        VectorXd dy = c.gy + c.gyy * yh;
        out.grad.resize(n);
        out.grad[0] = dt;
        out.grad.tail(d) = MbarInvC.transpose() * dy;
        MatrixXd h(n, n);
        h(0, 0) = c.p.dot((der.jet.hess * der.zdot).tail(n)) +
                  der.zdot.tail(n).dot(der.jet.grad.tail(n));
        VectorXd hty = der.gydot + der.gyydot * yh;
        h.block(0, 1, 1, d) = (MbarInvC.transpose() * hty).transpose();
        h.block(1, 0, d, 1) = MbarInvC.transpose() * hty;
        h.bottomRightCorner(d, d) = MbarInvC.transpose() * c.gyy * MbarInvC;
        out.hess = h;
        return out;
      };
      auto homogeneous = [ham, bcopy, MbarInvC, MinvC, n, d](const VectorXd& q) {
        double t = q[0];
        VectorXd yh = MbarInvC * q.tail(d);
        CharPoint c = bcopy.at(t);
        detail::CharDerivs der = detail::char_derivs(ham, c);
        detail::ModelPoint mp = detail::model_at(bcopy, c, der, yh);
        MapJet out;
        out.value = mp.x;
        out.jac = mp.frame * MinvC;
        // Second derivatives of the model in the pre-scaling chart. The
        // time-time column needs the second time derivatives of x and V:
        //   zdd = J Hess zdot,  Vdd_j = J (dHess/dt V_j + Hess Vdot_j).
        auto prs = sym_index_pairs(d);
        const MatrixXd& hs = der.jet.hess;
        VectorXd zdd = detail::apply_J(hs * der.zdot, n);
        MatrixXd dhess_dt = der.jet.third.contract_first(der.zdot);
        MatrixXd vdd(2 * n, d);
        for (int j = 0; j < d; ++j)
          vdd.col(j) = detail::apply_J(
              dhess_dt * c.V.col(j) + hs * der.Vdot.col(j), n);
        VectorXd ttc = zdd.head(n) + vdd.topRows(n) * yh;
        std::vector<MatrixXd> hpre(n, MatrixXd::Zero(n, n));
        for (int j = 0; j < d; ++j) {
          VectorXd col = der.Vdot.col(j).head(n);
          for (int m = 0; m < static_cast<int>(prs.size()); ++m) {
            auto [jj, kk] = prs[m];
            if (jj == j) col += der.Sdot.col(m).head(n) * yh[kk];
            if (kk == j && jj != kk) col += der.Sdot.col(m).head(n) * yh[jj];
          }
          for (int a = 0; a < n; ++a) {
            hpre[a](0, j + 1) = col[a];
            hpre[a](j + 1, 0) = col[a];
          }
        }
        for (int m = 0; m < static_cast<int>(prs.size()); ++m) {
          auto [j, k] = prs[m];
          for (int a = 0; a < n; ++a) {
            hpre[a](j + 1, k + 1) = c.S(a, m);
            hpre[a](k + 1, j + 1) = c.S(a, m);
          }
        }
        for (int a = 0; a < n; ++a) {
          hpre[a](0, 0) = ttc[a];
          out.hess.push_back(MinvC.transpose() * hpre[a] * MinvC);
        }
        return out;
      };
      out.Phi = FiberedSymplecto::vertical(vertical)
                    .then(FiberedSymplecto::homogeneous(homogeneous));
      return out;
    } catch (const NumericError& e) {
      last_err = e.what();
    }
  }
  throw NumericError("normal_form: no admissible span (" + last_err + ")");
}

}  // namespace normal_form
}  // namespace subrq
