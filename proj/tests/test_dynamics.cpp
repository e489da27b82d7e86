#include "subrq/dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using subrq::ControlCurve;
using subrq::Expr;
using subrq::Frame;
using subrq::Hamiltonian;
using subrq::MatrixXd;
using subrq::PhaseOrbit;
using subrq::VectorXd;

namespace {

Frame heisenberg() {
  return Frame(3,
               {{Expr::parse("1", 3), Expr::parse("0", 3),
                 Expr::parse("-q2/2", 3)},
                {Expr::parse("0", 3), Expr::parse("1", 3),
                 Expr::parse("q1/2", 3)}},
               {Expr::parse("q2/2", 3), Expr::parse("-q1/2", 3),
                Expr::parse("1", 3)});
}

std::vector<std::vector<Expr>> identity_metric(int d, int dim) {
  std::vector<std::vector<Expr>> g(d, std::vector<Expr>(d, Expr::constant(0.0, dim)));
  for (int i = 0; i < d; ++i) g[i][i] = Expr::constant(1.0, dim);
  return g;
}

Hamiltonian heisenberg_flat(const Expr& potential) {
  return Hamiltonian::from_frame(heisenberg(), identity_metric(2, 3),
                                 potential);
}

std::vector<VectorXd> sample_points(int count, unsigned seed, int dim) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<VectorXd> pts;
  for (int k = 0; k < count; ++k) {
    VectorXd q(dim);
    for (int i = 0; i < dim; ++i) q[i] = u(rng);
    pts.push_back(q);
  }
  return pts;
}

}  // namespace

TEST(Dynamics, FiberInvarianceAlongAnnihilator) {
  Frame fr = heisenberg();
  Hamiltonian h = heisenberg_flat(Expr::parse("0.2*cos(q1)", 3));
  auto eta = [&fr](const VectorXd& q) { return fr.eta_value(q); };
  EXPECT_TRUE(h.fiber_invariance_check(eta, sample_points(10, 3, 3)));

  auto bad = Hamiltonian::from_matrix(
      3, identity_metric(3, 3), Expr::constant(0.0, 3));
  EXPECT_FALSE(bad.fiber_invariance_check(eta, sample_points(10, 4, 3)));

  // Explicit kinetic matrix annihilating dz is fiber-invariant.
  std::vector<std::vector<Expr>> B = identity_metric(3, 3);
  B[2][2] = Expr::constant(0.0, 3);
  auto flat2 = Hamiltonian::from_matrix(3, B, Expr::constant(0.0, 3));
  auto dz = [](const VectorXd&) {
    VectorXd w(3);
    w << 0.0, 0.0, 1.0;
    return w;
  };
  EXPECT_TRUE(flat2.fiber_invariance_check(dz, sample_points(10, 5, 3)));
}

TEST(Dynamics, HarmonicOscillatorClosedForm) {
  auto h = Hamiltonian::from_matrix(1, {{Expr::constant(1.0, 1)}},
                                    Expr::parse("q1^2/2", 1));
  VectorXd q0(1), p0(1);
  q0 << 0.0;
  p0 << 1.0;
  PhaseOrbit orb = hamiltonian_flow(h, q0, p0, 1.0);
  EXPECT_NEAR(orb.q_at(1.0)[0], std::sin(1.0), 1e-11);
  EXPECT_NEAR(orb.p_at(1.0)[0], std::cos(1.0), 1e-11);
  EXPECT_LT(orb.energy_drift, 1e-12);
}

TEST(Dynamics, ContactStraightLineOrbit) {
  Hamiltonian h = heisenberg_flat(Expr::constant(0.0, 3));
  VectorXd q0 = VectorXd::Zero(3), p0(3);
  p0 << 1.0, 0.0, 0.0;
  PhaseOrbit orb = hamiltonian_flow(h, q0, p0, 2.0);
  EXPECT_NEAR(orb.level, 0.5, 1e-14);
  VectorXd qT = orb.q_at(2.0), pT = orb.p_at(2.0);
  EXPECT_NEAR(qT[0], 2.0, 1e-10);
  EXPECT_NEAR(qT[1], 0.0, 1e-10);
  EXPECT_NEAR(qT[2], 0.0, 1e-10);
  EXPECT_LT((pT - p0).norm(), 1e-10);
}

TEST(Dynamics, KineticMatrixFrozen) {
  Hamiltonian h = heisenberg_flat(Expr::parse("0.2*cos(q1)", 3));
  VectorXd q(3);
  q << 0.3, -0.7, 2.0;
  MatrixXd B = h.kinetic_matrix(q);
  MatrixXd F(3, 2);
  F << 1.0, 0.0, 0.0, 1.0, 0.35, 0.15;
  EXPECT_LT((B - F * F.transpose()).norm(), 1e-12);

  Hamiltonian ht = h.maupertuis(2.0);
  double m = 1.0 / (2.0 - 0.2 * std::cos(0.3));
  EXPECT_LT((ht.kinetic_matrix(q) - m * F * F.transpose()).norm(), 1e-12);
  EXPECT_NEAR(ht.potential_at(q), 0.0, 1e-15);
}

TEST(Dynamics, ShellProjection) {
  Hamiltonian h = heisenberg_flat(Expr::parse("0.2*cos(q1)", 3));
  VectorXd q0 = VectorXd::Zero(3), p0(3);
  p0 << 0.4, -0.3, 0.7;
  VectorXd ps = project_to_shell(h, q0, p0, 2.0);
  EXPECT_NEAR(h.value(q0, ps), 2.0, 1e-12);
  EXPECT_THROW(project_to_shell(h, q0, p0, 0.15), subrq::DomainError);
  VectorXd vertical(3);
  vertical << 0.0, 0.0, 1.0;  // annihilator direction: zero kinetic energy
  EXPECT_THROW(project_to_shell(h, q0, vertical, 2.0), subrq::DomainError);
}

TEST(Dynamics, SupercriticalMargin) {
  Hamiltonian h = heisenberg_flat(Expr::parse("0.2*cos(q1)", 3));
  VectorXd q0 = VectorXd::Zero(3), p0(3);
  p0 << 1.0, 0.5, 0.2;
  VectorXd ps = project_to_shell(h, q0, p0, 2.0);
  PhaseOrbit orb = hamiltonian_flow(h, q0, ps, 3.0);
  auto rep = supercritical_margin(h, orb, 2.0);
  EXPECT_TRUE(rep.supercritical);
  EXPECT_GT(rep.margin, 1.7);
  auto low = supercritical_margin(h, orb, 0.1);
  EXPECT_FALSE(low.supercritical);
}

TEST(Dynamics, EnergyGateTrips) {
  auto h = Hamiltonian::from_matrix(1, {{Expr::constant(1.0, 1)}},
                                    Expr::parse("q1^2/2", 1));
  VectorXd q0(1), p0(1);
  q0 << 0.3;
  p0 << 1.0;
  PhaseOrbit orb = hamiltonian_flow(h, q0, p0, 3.0);
  ASSERT_GT(orb.energy_drift, 0.0);
  EXPECT_THROW(hamiltonian_flow(h, q0, p0, 3.0, {}, 0.0),
               subrq::NumericError);
}

// The rescaled kinetic Hamiltonian at level 1 traces the same phase path,
// up to the time change tau' = level - U(Q(t)).
TEST(Dynamics, ReparametrizedKineticSamePath) {
  auto h = Hamiltonian::from_matrix(1, {{Expr::constant(1.0, 1)}},
                                    Expr::parse("0.3*sin(q1)", 1));
  const double level = 1.0;
  VectorXd q0(1), p0(1);
  q0 << 0.2;
  p0 << 1.0;
  VectorXd ps = project_to_shell(h, q0, p0, level);
  const double T = 2.0;
  PhaseOrbit base = hamiltonian_flow(h, q0, ps, T);

  Hamiltonian ht = h.maupertuis(level);
  EXPECT_NEAR(ht.value(q0, ps), 1.0, 1e-13);

  auto tau_rhs = [&](double t, const VectorXd&) {
    VectorXd out(1);
    out << level - h.value(base.q_at(t), VectorXd::Zero(1));
    return out;
  };
  auto tau = subrq::ode_integrate(tau_rhs, 0.0, T, VectorXd::Zero(1));
  double T2 = tau.node_states().back()[0];
  PhaseOrbit repar = hamiltonian_flow(ht, q0, ps, T2);

  for (int k = 0; k <= 40; ++k) {
    double t = T * k / 40.0;
    double s = tau.eval(t)[0];
    EXPECT_LT((base.z.eval(t) - repar.z.eval(s)).norm(), 1e-8)
        << "t=" << t;
  }
}

TEST(Dynamics, ReturnTimesCircleTraversedTwice) {
  auto h = Hamiltonian::from_matrix(2, identity_metric(2, 2),
                                    Expr::parse("(q1^2+q2^2)/2", 2));
  VectorXd q0(2), p0(2);
  q0 << 1.0, 0.0;
  p0 << 0.0, 1.0;
  PhaseOrbit orb = hamiltonian_flow(h, q0, p0, 4.0 * M_PI + 0.1);
  auto neat = annotate_neat_times(orb);
  ASSERT_EQ(neat.times.size(), 3u);
  EXPECT_NEAR(neat.times[0], 0.0, 1e-12);
  EXPECT_NEAR(neat.times[1], 2.0 * M_PI, 1e-6);
  EXPECT_NEAR(neat.times[2], 4.0 * M_PI, 1e-6);
}

TEST(Dynamics, ReturnTimesFigureEight) {
  auto h = Hamiltonian::from_matrix(2, identity_metric(2, 2),
                                    Expr::parse("2*q1^2 + q2^2/2", 2));
  VectorXd q0(2), p0(2);
  q0 << 0.0, 0.0;
  p0 << 1.0, 1.0;
  PhaseOrbit orb = hamiltonian_flow(h, q0, p0, 2.0 * M_PI + 0.05);
  auto neat = annotate_neat_times(orb);
  ASSERT_EQ(neat.times.size(), 3u);
  EXPECT_NEAR(neat.times[1], M_PI, 1e-6);
  EXPECT_NEAR(neat.times[2], 2.0 * M_PI, 1e-6);
}

TEST(Dynamics, MonodromyRotationFrozen) {
  auto h = Hamiltonian::from_matrix(1, {{Expr::constant(1.0, 1)}},
                                    Expr::parse("q1^2/2", 1));
  VectorXd q0(1), p0(1);
  q0 << 0.4;
  p0 << -0.2;
  auto mon = monodromy_matrix(h, q0, p0, 0.7);
  MatrixXd want(2, 2);
  want << std::cos(0.7), std::sin(0.7), -std::sin(0.7), std::cos(0.7);
  EXPECT_LT((mon.X - want).norm(), 1e-11);
  EXPECT_LT(mon.symplectic_defect, 1e-12);
}

TEST(Dynamics, LegendreDualReproducesControls) {
  Frame fr = heisenberg();
  VectorXd q(3), c(2);
  q << 0.3, -0.7, 2.0;
  c << 0.7, -0.2;
  MatrixXd g = MatrixXd::Identity(2, 2);
  VectorXd p = subrq::legendre_dual_quadratic(fr, g, q, c);
  MatrixXd F = fr.frame_matrix(q);
  EXPECT_LT((F.transpose() * p - g * c).norm(), 1e-12);

  Hamiltonian h = heisenberg_flat(Expr::constant(0.0, 3));
  subrq::JetValue j = h.phase_jet(q, p, 1);
  VectorXd qdot = j.grad.tail(3);
  EXPECT_LT((qdot - F * c).norm(), 1e-12);
}

TEST(Dynamics, ReversibilityHoldsForQuadraticForms) {
  Hamiltonian h = heisenberg_flat(Expr::parse("0.2*cos(q1)", 3));
  EXPECT_TRUE(h.reversibility_check(sample_points(10, 6, 3)));
}
