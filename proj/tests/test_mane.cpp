#include "subrq/mane.hpp"

#include <gtest/gtest.h>

#include <random>

using subrq::BracketFamily;
using subrq::MatPoly;
using subrq::MatrixXd;
using subrq::Series;
using subrq::VectorXd;

namespace {

MatPoly random_sym_poly(int d, int deg, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<MatrixXd> coeffs;
  for (int k = 0; k <= deg; ++k) {
    MatrixXd m(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j <= i; ++j) m(i, j) = m(j, i) = u(rng);
    coeffs.push_back(m);
  }
  return MatPoly::from_coeffs(std::move(coeffs));
}

double poly_diff(const MatPoly& a, const MatPoly& b) {
  double m = 0;
  for (int k = 0; k <= std::max(a.degree(), b.degree()); ++k)
    m = std::max(m, (a.coeff_or_zero(k) - b.coeff_or_zero(k)).norm());
  return m;
}

}  // namespace

// The recursion reproduces the hand-expanded low-order forms
//   B2 = [A E, 0; 0, -E A]
//   B3 = [A' E, -2 A E A; 0, -E A']
//   B4 = [A'' E, -3 (A' E A + A E A'); 0, -E A''].
TEST(Mane, RecursionMatchesExpandedForms) {
  for (int d : {2, 3}) {
    MatPoly A = random_sym_poly(d, 3, 40 + d);
    MatPoly Ad = A.derivative();
    MatPoly Add = Ad.derivative();
    BracketFamily fam = bracket_family(A, 4);
    MatPoly zero = subrq::detail::const_poly(MatrixXd::Zero(d, d));
    for (std::size_t k = 0; k < fam.pairs.size(); ++k) {
      MatPoly E = subrq::detail::const_poly(
          subrq::sym_entry(d, fam.pairs[k].first, fam.pairs[k].second));
      EXPECT_LT(poly_diff(fam.gen[1][k],
                          subrq::detail::block2(A * E, zero, zero,
                                                zero - E * A)),
                1e-12);
      EXPECT_LT(poly_diff(fam.gen[2][k],
                          subrq::detail::block2(Ad * E,
                                                zero - (A * E * A) * 2.0,
                                                zero, zero - E * Ad)),
                1e-12);
      EXPECT_LT(
          poly_diff(fam.gen[3][k],
                    subrq::detail::block2(
                        Add * E, zero - (Ad * E * A + A * E * Ad) * 3.0,
                        zero, zero - E * Add)),
          1e-12);
    }
  }
}

// Constant rank-one curve diag(1, 0): the reachable set closes at
// dimension 6 inside the 10-dimensional algebra.
TEST(Mane, ConstantDegenerateCurveRankSix) {
  MatrixXd A0(2, 2);
  A0 << 1.0, 0.0, 0.0, 0.0;
  BracketFamily fam = bracket_family(MatPoly(A0), 5);
  auto rep = subrq::span_test(fam.at(0.0), 2);
  EXPECT_EQ(rep.dim_target, 10);
  EXPECT_EQ(rep.rank, 6);
  EXPECT_FALSE(rep.spans);
  ASSERT_GT(rep.kernel_witness.size(), 0);
  EXPECT_NEAR(rep.kernel_witness.norm(), 1.0, 1e-12);
  EXPECT_LT(rep.max_membership_defect, 1e-12);
}

TEST(Mane, SampledFamiliesSpan) {
  for (int d : {2, 3}) {
    auto ks = subrq::sample_kernel_family(d, 4, 7 + d);
    BracketFamily fam = bracket_family(ks.A, 5);
    auto rep = subrq::span_test(fam.at(0.0), d);
    EXPECT_TRUE(rep.spans) << "d=" << d << " rank=" << rep.rank << "/"
                           << rep.dim_target;
    EXPECT_LT(rep.max_membership_defect, 1e-12);
  }
}

TEST(Mane, ConjugationPreservesRank) {
  auto ks = subrq::sample_kernel_family(3, 3, 21);
  MatrixXd gbar(2, 2);
  gbar << std::cos(0.7), -std::sin(0.7), std::sin(0.7), std::cos(0.7);
  MatrixXd G = subrq::embed_rotation_block(gbar);
  MatPoly At = subrq::conjugate_curve(ks.A, G);
  auto r1 = subrq::span_test(bracket_family(ks.A, 5).at(0.0), 3);
  auto r2 = subrq::span_test(bracket_family(At, 5).at(0.0), 3);
  EXPECT_EQ(r1.rank, r2.rank);

  MatrixXd A0(2, 2);
  A0 << 1.0, 0.0, 0.0, 0.0;
  MatrixXd flip(2, 2);
  flip << -1.0, 0.0, 0.0, 1.0;
  auto r3 = subrq::span_test(
      bracket_family(subrq::conjugate_curve(MatPoly(A0), flip), 5).at(0.0), 2);
  EXPECT_EQ(r3.rank, 6);
}

TEST(Mane, SamplerKernelAndSpectrum) {
  for (int d : {2, 3, 4}) {
    auto ks = subrq::sample_kernel_family(d, 4, 90 + d);
    // Symmetry of every coefficient.
    for (int k = 0; k <= ks.A.degree(); ++k)
      EXPECT_LT((ks.A.coeff(k) - ks.A.coeff(k).transpose()).norm(), 1e-13);
    // A(t) n(t) = 0 to the carried truncation order.
    int ord = ks.n[0].order();
    for (int i = 0; i < d; ++i) {
      Series acc(ord);
      for (int j = 0; j < d; ++j) {
        Series aij(ord);
        for (int k = 0; k <= std::min(ord, ks.A.degree()); ++k)
          aij.coeff(k) = ks.A.coeff(k)(i, j);
        acc = acc + aij * ks.n[j];
      }
      for (int k = 0; k <= ord; ++k)
        EXPECT_NEAR(acc[k], 0.0, 1e-11) << "row " << i << " coeff " << k;
    }
    // Unit kernel direction and matching spectrum at t = 0.
    VectorXd n0(d);
    for (int i = 0; i < d; ++i) n0[i] = ks.n[i][0];
    EXPECT_NEAR(n0.norm(), 1.0, 1e-12);
    EXPECT_LT((ks.A.eval(0.0) * n0).norm(), 1e-12);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(ks.A.eval(0.0));
    VectorXd got = es.eigenvalues();
    VectorXd want = ks.lambda0;
    std::sort(want.data(), want.data() + d);
    EXPECT_LT((got - want).norm(), 1e-12);
  }
}

TEST(Mane, GenericityScanAllSpanning) {
  auto sum = subrq::genericity_scan(2, 3, 10, 100);
  EXPECT_EQ(sum.total, 10);
  EXPECT_EQ(sum.spanning, 10) << "failing seeds: " << sum.failing_seeds.size();
}

TEST(Mane, MembershipGuardThrows) {
  MatrixXd bad = MatrixXd::Zero(4, 4);
  bad(0, 0) = 1.0;
  bad(0, 1) = 2.0;  // upper-left block with no -M^T mirror
  EXPECT_THROW(subrq::span_test({bad}, 2), subrq::DomainError);
}
