#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "subrq/common.hpp"
#include "subrq/expr.hpp"
#include "subrq/geometry.hpp"
#include "subrq/ode.hpp"

// Cotangent lifts of horizontal curves.  A curve Q with control c admits a
// normal lift P solving
//
//   Pdot = -sum_i c_i (Df^i(Q))^T P + grad_q phi(Q, c),
//   phi(q, c) = 1/2 c^T g(q) c - U(q),
//
// subject to the fiberwise maximality condition g(Q)c = F(Q)^T P, and an
// abnormal lift eta solving the homogeneous part with eta . f^i(Q) = 0 for
// all i.  On a co-rank-1 distribution the abnormal candidate space is one
// dimensional, so the search reduces to transporting the annihilator and
// monitoring the constraints.

namespace subrq {
namespace lifts {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

inline MatrixXd metric_at(const std::vector<std::vector<Expr>>& g,
                          const VectorXd& q) {
  const int d = static_cast<int>(g.size());
  MatrixXd m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = g[i][j].eval(q);
  return m;
}

// grad_q [ 1/2 c^T g(q) c - U(q) ].
inline VectorXd running_cost_gradient(const std::vector<std::vector<Expr>>& g,
                                      const Expr& potential, const VectorXd& q,
                                      const VectorXd& c) {
  const int d = static_cast<int>(g.size());
  VectorXd out = -potential.eval_jet(q, 1).grad;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      out += 0.5 * c[i] * c[j] * g[i][j].eval_jet(q, 1).grad;
  return out;
}

inline void check_metric_shape(const Frame& fr,
                               const std::vector<std::vector<Expr>>& g) {
  const int d = fr.rank();
  if (static_cast<int>(g.size()) != d)
    throw DomainError("metric must be d x d over the frame");
  for (const auto& row : g)
    if (static_cast<int>(row.size()) != d)
      throw DomainError("metric must be d x d over the frame");
}

// Times where path monitors are evaluated: integrator nodes plus a uniform
// refinement, so short node lists cannot hide a mid-span violation.
inline std::vector<double> monitor_times(const DenseSolution& sol,
                                         int uniform = 129) {
  std::vector<double> ts = sol.node_times();
  const double a = sol.t_begin(), b = sol.t_end();
  if (b != a)
    for (int k = 0; k < uniform; ++k)
      ts.push_back(a + (b - a) * k / (uniform - 1.0));
  return ts;
}

}  // namespace detail

struct NormalLift {
  int n = 0;
  double T = 0.0;
  DenseSolution P;
  double energy = 0.0;        // H(Q(0), P(0)) for the dual Hamiltonian
  double energy_drift = 0.0;  // max_t |H(Q(t), P(t)) - energy|
  // max_t ||F g^{-1} F^T P - Qdot|| / (1 + ||Qdot||): zero exactly when P
  // stays the Legendre covector of the control along the whole curve.
  double velocity_gap = 0.0;

  VectorXd covector(double t) const { return P.eval(t); }
};

// Integrates the normal-lift equation from p0 along the given curve.  p0
// must satisfy g(Q(0)) c(0) = F(Q(0))^T p0; this is cross-checked against a
// sampled fiberwise supremum of p . Fv - phi(q, v) before integrating.
inline NormalLift lift_normal(const Frame& fr,
                              const std::vector<std::vector<Expr>>& metric,
                              const Expr& potential,
                              const HorizontalCurve& curve, const VectorXd& p0,
                              OdeOptions opt = {}) {
  detail::check_metric_shape(fr, metric);
  const int n = fr.ambient_dim();
  const int d = fr.rank();
  if (p0.size() != n) throw DomainError("initial covector has wrong dimension");
  if (!curve.control) throw DomainError("curve carries no control");

  const VectorXd q0 = curve.position(curve.q.t_begin());
  const VectorXd c0 = curve.control(curve.q.t_begin());
  if (c0.size() != d) throw DomainError("control has wrong dimension");

  const MatrixXd F0 = fr.frame_matrix(q0);
  const MatrixXd g0 = detail::metric_at(metric, q0);
  const VectorXd w0 = F0.transpose() * p0;
  const double stat_tol = 1e-8 * (1.0 + w0.norm() + (g0 * c0).norm());
  if ((g0 * c0 - w0).norm() > stat_tol)
    throw DomainError(
        "initial covector fails the fiberwise maximality condition");

  // Sampled supremum: no velocity may beat the control's value.
  const auto phi = [&](const VectorXd& q, const VectorXd& c) {
    return 0.5 * c.dot(detail::metric_at(metric, q) * c) - potential.eval(q);
  };
  const double val0 = p0.dot(F0 * c0) - phi(q0, c0);
  std::mt19937_64 rng(0x5eed11f7ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < 64; ++k) {
    VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = c0[i] + (1.0 + c0.norm()) * gauss(rng);
    if (p0.dot(F0 * v) - phi(q0, v) > val0 + 1e-9 * (1.0 + std::abs(val0)))
      throw DomainError(
          "initial covector fails the fiberwise maximality condition");
  }

  auto rhs = [&](double t, const VectorXd& p) -> VectorXd {
    const VectorXd q = curve.position(t);
    const VectorXd c = curve.control(t);
    VectorXd out = detail::running_cost_gradient(metric, potential, q, c);
    for (int i = 0; i < d; ++i)
      out -= c[i] * (fr.field_jacobian(i, q).transpose() * p);
    return out;
  };

  NormalLift lift;
  lift.n = n;
  lift.T = curve.T;
  lift.P = ode_integrate(rhs, curve.q.t_begin(), curve.q.t_begin() + curve.T,
                         p0, opt);

  // Dual energy H = 1/2 w^T g^{-1} w + U and velocity consistency.
  const auto dual_energy = [&](const VectorXd& q, const VectorXd& p) {
    const MatrixXd g = detail::metric_at(metric, q);
    const VectorXd w = fr.frame_matrix(q).transpose() * p;
    return 0.5 * w.dot(g.llt().solve(w)) + potential.eval(q);
  };
  lift.energy = dual_energy(q0, p0);
  for (double t : detail::monitor_times(lift.P)) {
    const VectorXd q = curve.position(t);
    const VectorXd p = lift.P.eval(t);
    const VectorXd c = curve.control(t);
    const MatrixXd F = fr.frame_matrix(q);
    const MatrixXd g = detail::metric_at(metric, q);
    lift.energy_drift = std::max(lift.energy_drift,
                                 std::abs(dual_energy(q, p) - lift.energy));
    const VectorXd qdot = F * c;
    const VectorXd vel = F * g.llt().solve(F.transpose() * p);
    lift.velocity_gap = std::max(lift.velocity_gap,
                                 (vel - qdot).norm() / (1.0 + qdot.norm()));
  }
  return lift;
}

// Transports a covector by the homogeneous lift equation
// etadot = -sum_i c_i (Df^i(Q))^T eta.  Linear in eta0.
inline DenseSolution transport_annihilator(const Frame& fr,
                                           const HorizontalCurve& curve,
                                           const VectorXd& eta0,
                                           OdeOptions opt = {}) {
  if (eta0.size() != fr.ambient_dim())
    throw DomainError("covector has wrong dimension");
  if (!curve.control) throw DomainError("curve carries no control");
  const int d = fr.rank();
  auto rhs = [&](double t, const VectorXd& e) -> VectorXd {
    const VectorXd q = curve.position(t);
    const VectorXd c = curve.control(t);
    VectorXd out = VectorXd::Zero(e.size());
    for (int i = 0; i < d; ++i)
      out -= c[i] * (fr.field_jacobian(i, q).transpose() * e);
    return out;
  };
  return ode_integrate(rhs, curve.q.t_begin(), curve.q.t_begin() + curve.T,
                       eta0, opt);
}

struct AbnormalCovector {
  bool found = false;
  bool degenerate = false;  // zero-length curve; any annihilator covector works
  DenseSolution eta;        // transported candidate (unnormalized)
  // max over t, i of |eta . f^i(Q)| / (||eta|| ||f^i(Q)||).  Scale
  // invariant, so the linear transport needs no renormalization.
  double max_residual = std::numeric_limits<double>::infinity();

  VectorXd covector(double t) const {
    VectorXd e = eta.eval(t);
    const double s = e.norm();
    if (s > 0) e /= s;
    return e;
  }
};

// On a co-rank-1 distribution an abnormal lift, if present, is a multiple of
// the transported annihilator.  Transports eta(0) = eta(Q(0))/|eta(Q(0))| and
// accepts iff the annihilation constraints hold along the whole curve.
inline AbnormalCovector abnormal_search(const Frame& fr,
                                        const HorizontalCurve& curve,
                                        OdeOptions opt = {},
                                        double tol = 1e-7) {
  AbnormalCovector out;
  VectorXd eta0 = fr.eta_value(curve.position(curve.q.t_begin()));
  const double s = eta0.norm();
  if (s < 1e-14) throw DomainError("annihilator vanishes at the base point");
  eta0 /= s;
  out.eta = transport_annihilator(fr, curve, eta0, opt);
  out.degenerate = curve.T == 0.0;

  out.max_residual = 0.0;
  for (double t : detail::monitor_times(out.eta)) {
    const VectorXd q = curve.position(t);
    const VectorXd e = out.eta.eval(t);
    const MatrixXd F = fr.frame_matrix(q);
    const double en = e.norm();
    for (int i = 0; i < fr.rank(); ++i) {
      const double fn = F.col(i).norm();
      if (en * fn == 0.0) continue;
      out.max_residual =
          std::max(out.max_residual, std::abs(e.dot(F.col(i))) / (en * fn));
    }
  }
  out.found = out.max_residual <= tol;
  return out;
}

struct LiftUniqueness {
  bool unique = true;
  bool singular = false;  // abnormal covector present: uniqueness has no
                          // guarantee and a gap is reported, not an error
  bool valid_a = false, valid_b = false;  // velocity consistency of each lift
  double max_gap = 0.0;                   // max_t ||P_a(t) - P_b(t)||
  double gap_a = 0.0, gap_b = 0.0;        // velocity gaps of the two lifts
};

// Lifts the same curve from two initial covectors and compares.  Distinct
// valid lifts certify non-uniqueness (possible only along singular curves);
// an invalid lift upholds uniqueness vacuously.
inline LiftUniqueness unique_lift_check(
    const Frame& fr, const std::vector<std::vector<Expr>>& metric,
    const Expr& potential, const HorizontalCurve& curve, const VectorXd& p0a,
    const VectorXd& p0b, OdeOptions opt = {}, double tol = 1e-7) {
  const NormalLift la = lift_normal(fr, metric, potential, curve, p0a, opt);
  const NormalLift lb = lift_normal(fr, metric, potential, curve, p0b, opt);
  LiftUniqueness out;
  constexpr double kVelTol = 1e-6;
  out.gap_a = la.velocity_gap;
  out.gap_b = lb.velocity_gap;
  out.valid_a = la.velocity_gap < kVelTol;
  out.valid_b = lb.velocity_gap < kVelTol;
  out.singular = abnormal_search(fr, curve, opt).found;

  double scale = 0.0;
  for (double t : detail::monitor_times(la.P)) {
    const VectorXd pa = la.P.eval(t);
    out.max_gap = std::max(out.max_gap, (pa - lb.P.eval(t)).norm());
    scale = std::max(scale, pa.norm());
  }
  out.unique = out.max_gap <= tol * (1.0 + scale) || !(out.valid_a && out.valid_b);
  return out;
}

}  // namespace lifts
}  // namespace subrq
