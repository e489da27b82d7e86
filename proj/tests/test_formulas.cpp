#include "subrq/formulas.hpp"

#include <gtest/gtest.h>

#include <random>

#include "subrq/mane.hpp"

using subrq::DomainError;
using subrq::MatPoly;
using subrq::MatrixXd;
using subrq::VectorXd;
using subrq::sym_entry;
using subrq::sym_index_pairs;
namespace fm = subrq::formulas;

namespace {

struct Params {
  VectorXd mu, v, w;  // mu, v in R^{d-1}, w in R^d
};

// mu gets well-separated magnitudes so no |mu_i| = |mu_j| pole is hit;
// v stays bounded away from zero.
Params random_params(int d, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Params p;
  p.mu = VectorXd(d - 1);
  p.v = VectorXd(d - 1);
  p.w = VectorXd(d);
  for (int i = 0; i < d - 1; ++i) {
    double sign = (i % 2 == 0) ? 1.0 : -1.0;
    p.mu[i] = sign * (0.8 * (i + 1) + 0.15 * u(rng));
    double vi = u(rng);
    p.v[i] = (vi >= 0 ? 0.3 + 0.7 * vi : -0.3 + 0.7 * vi);
  }
  for (int i = 0; i < d; ++i) p.w[i] = u(rng);
  return p;
}

// Literal matrix products; shares only the jet builders with the header.
struct BruteBasis {
  MatrixXd xi, eta, zeta, gamma, kappa;
};

BruteBasis brute_basis(int i, int j, const Params& p) {
  const int d = static_cast<int>(p.w.size());
  const MatrixXd A0 = fm::a0_matrix(d);
  const MatrixXd A1 = fm::a1_matrix(p.mu, p.v);
  const MatrixXd A2 = fm::a2_matrix(p.w);
  const MatrixXd E = sym_entry(d, i, j);
  BruteBasis b;
  b.xi = A0 * E;
  b.eta = A1 * E;
  b.zeta = A2 * E;
  b.gamma = A0 * E * A0;
  b.kappa = A1 * E * A0 + A0 * E * A1;
  return b;
}

MatPoly family_poly(const Params& p) {
  const int d = static_cast<int>(p.w.size());
  return MatPoly::from_coeffs({fm::a0_matrix(d), fm::a1_matrix(p.mu, p.v),
                               0.5 * fm::a2_matrix(p.w)});
}

MatrixXd random_skew(int n, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixXd s = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      s(i, j) = u(rng);
      s(j, i) = -s(i, j);
    }
  return s;
}

MatrixXd random_orthogonal(int n, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = u(rng);
  return Eigen::HouseholderQR<MatrixXd>(m).householderQ();
}

}  // namespace

TEST(Formulas, BasisMatchesLiteralProducts) {
  for (int d = 2; d <= 6; ++d) {
    Params p = random_params(d, 100 + d);
    for (const auto& [i, j] : sym_index_pairs(d)) {
      const fm::FamilyBasis closed = fm::family_basis(i, j, p.mu, p.v, p.w);
      const BruteBasis brute = brute_basis(i, j, p);
      EXPECT_LT((closed.xi - brute.xi).norm(), 1e-12) << d << " " << i << j;
      EXPECT_LT((closed.eta - brute.eta).norm(), 1e-12) << d << " " << i << j;
      EXPECT_LT((closed.zeta - brute.zeta).norm(), 1e-12)
          << d << " " << i << j;
      EXPECT_LT((closed.gamma - brute.gamma).norm(), 1e-12)
          << d << " " << i << j;
      EXPECT_LT((closed.kappa - brute.kappa).norm(), 1e-12)
          << d << " " << i << j;
    }
  }
}

TEST(Formulas, BasisStructureSpotChecks) {
  const int d = 4;
  Params p = random_params(d, 7);
  // corner pair: xi, gamma, kappa vanish identically
  const fm::FamilyBasis corner =
      fm::family_basis(d - 1, d - 1, p.mu, p.v, p.w);
  EXPECT_EQ(corner.xi.norm(), 0.0);
  EXPECT_EQ(corner.gamma.norm(), 0.0);
  EXPECT_EQ(corner.kappa.norm(), 0.0);
  // corner eta: the strips of -2 v in the last column
  MatrixXd eta_corner = MatrixXd::Zero(d, d);
  for (int k = 0; k < d - 1; ++k) eta_corner(k, d - 1) = -2.0 * p.v[k];
  EXPECT_LT((corner.eta - eta_corner).norm(), 1e-14);
  // interior gamma is the plain symmetric direction
  for (const auto& [i, j] : fm::interior_pairs(d)) {
    const fm::FamilyBasis b = fm::family_basis(i, j, p.mu, p.v, p.w);
    EXPECT_LT((b.gamma - sym_entry(d, i, j)).norm(), 1e-14);
  }
  EXPECT_THROW(fm::family_basis(2, 1, p.mu, p.v, p.w), DomainError);
}

TEST(Formulas, DiagPairingIdentity) {
  const int n = 5;
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixXd s(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) s(i, j) = s(j, i) = u(rng);
  VectorXd w(n), x(n);
  for (int i = 0; i < n; ++i) {
    w[i] = u(rng);
    x[i] = u(rng);
  }
  double lhs = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) lhs += s(i, j) * (w[i] * x[j] + x[i] * w[j]);
  const double rhs = fm::diag_pairing(s, w).dot(x);
  EXPECT_NEAR(lhs, rhs, 1e-13);
}

TEST(Formulas, AggregateSumsMatchNaiveSummation) {
  for (int d : {2, 4, 6}) {
    Params p = random_params(d, 40 + d);
    const auto pairs = fm::corner_free_pairs(d);
    const int np = static_cast<int>(pairs.size());
    std::mt19937 rng(50 + d);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    VectorXd a(np), b(np), c(np);
    for (int k = 0; k < np; ++k) {
      a[k] = u(rng);
      b[k] = u(rng);
      c[k] = u(rng);
    }
    MatrixXd diag = MatrixXd::Zero(d, d), ur = MatrixXd::Zero(d, d);
    for (int k = 0; k < np; ++k) {
      const auto& [i, j] = pairs[k];
      const BruteBasis bb = brute_basis(i, j, p);
      diag += a[k] * bb.xi + b[k] * bb.eta + c[k] * bb.zeta;
      ur += 2.0 * b[k] * bb.gamma + 3.0 * c[k] * bb.kappa;
    }
    const fm::BlockSums closed =
        fm::aggregate_sums(d, p.mu, p.v, p.w, a, b, c);
    EXPECT_LT((closed.diag_block - diag).norm(), 1e-12) << d;
    EXPECT_LT((closed.upper_right - ur).norm(), 1e-12) << d;
  }
}

TEST(Formulas, AggregateSingleCoefficient) {
  const int d = 3;
  Params p = random_params(d, 4);
  const auto pairs = fm::corner_free_pairs(d);
  VectorXd a = VectorXd::Zero(pairs.size()), b = a, c = a;
  int k01 = -1;
  for (int k = 0; k < static_cast<int>(pairs.size()); ++k)
    if (pairs[k] == std::make_pair(0, 1)) k01 = k;
  ASSERT_GE(k01, 0);
  b[k01] = 1.0;
  const fm::BlockSums s = fm::aggregate_sums(d, p.mu, p.v, p.w, a, b, c);
  const BruteBasis bb = brute_basis(0, 1, p);
  EXPECT_LT((s.diag_block - bb.eta).norm(), 1e-14);
  EXPECT_LT((s.upper_right - 2.0 * bb.gamma).norm(), 1e-14);
}

TEST(Formulas, ConjugatedJetsMatchPolynomialProduct) {
  for (int d = 2; d <= 5; ++d) {
    std::mt19937 rng(70 + d);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const MatrixXd S1 = random_skew(d, rng);
    const MatrixXd S2 = random_skew(d, rng);
    const MatrixXd P1 = S1;
    const MatrixXd P2 = S2 + S1 * S1;  // orthogonal through second order
    VectorXd d1(d - 1);
    MatrixXd d2(d - 1, d - 1);
    for (int i = 0; i < d - 1; ++i) d1[i] = u(rng);
    for (int i = 0; i < d - 1; ++i)
      for (int j = 0; j <= i; ++j) d2(i, j) = d2(j, i) = u(rng);

    const MatPoly P = MatPoly::from_coeffs(
        {MatrixXd::Identity(d, d), P1, 0.5 * P2});
    MatrixXd L0 = fm::a0_matrix(d);
    MatrixXd L1 = MatrixXd::Zero(d, d);
    L1.topLeftCorner(d - 1, d - 1) = d1.asDiagonal();
    MatrixXd L2 = MatrixXd::Zero(d, d);
    L2.topLeftCorner(d - 1, d - 1) = d2;
    const MatPoly A = P * MatPoly::from_coeffs({L0, L1, 0.5 * L2}) *
                      P.transpose();

    const fm::ConjugatedJets closed = fm::conjugated_jets(P1, P2, d1, d2);
    EXPECT_LT((closed.a1 - A.coeff(1)).norm(), 1e-12) << d;
    EXPECT_LT((closed.a2 - 2.0 * A.coeff(2)).norm(), 1e-12) << d;
  }
}

TEST(Formulas, ConjugatedJetsKnownCases) {
  // stationary rotation factor, moving diagonal
  {
    const MatrixXd Z = MatrixXd::Zero(2, 2);
    VectorXd d1(1);
    d1 << 1.0;
    const MatrixXd d2 = MatrixXd::Zero(1, 1);
    const fm::ConjugatedJets j = fm::conjugated_jets(Z, Z, d1, d2);
    MatrixXd want(2, 2);
    want << 1, 0, 0, 0;
    EXPECT_LT((j.a1 - want).norm(), 1e-15);
    EXPECT_LT(j.a2.norm(), 1e-15);
  }
  // pure rotation, frozen diagonal
  {
    MatrixXd P1(2, 2);
    P1 << 0, 1, -1, 0;
    const MatrixXd P2 = P1 * P1;
    const VectorXd d1 = VectorXd::Zero(1);
    const MatrixXd d2 = MatrixXd::Zero(1, 1);
    const fm::ConjugatedJets j = fm::conjugated_jets(P1, P2, d1, d2);
    MatrixXd want(2, 2);
    want << 0, -1, -1, 0;
    EXPECT_LT((j.a1 - want).norm(), 1e-15);
  }
  // violated orthogonality is refused
  {
    MatrixXd P1(2, 2);
    P1 << 0, 1, -1, 0;
    EXPECT_THROW(fm::conjugated_jets(P1, MatrixXd::Zero(2, 2),
                                     VectorXd::Zero(1), MatrixXd::Zero(1, 1)),
                 DomainError);
    MatrixXd notskew = MatrixXd::Identity(2, 2);
    EXPECT_THROW(fm::conjugated_jets(notskew, MatrixXd::Zero(2, 2),
                                     VectorXd::Zero(1), MatrixXd::Zero(1, 1)),
                 DomainError);
  }
}

TEST(Formulas, AlphaCancelsSecondOrderBlock) {
  const int d = 4, L = d - 1;
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  const MatrixXd Q = random_skew(L, rng);
  VectorXd vbar(L);
  for (int i = 0; i < L; ++i) vbar[i] = 0.4 + 0.5 * std::abs(u(rng));
  MatrixXd P1 = MatrixXd::Zero(d, d);
  P1.topLeftCorner(L, L) = Q;
  P1.col(L).head(L) = vbar;
  P1.row(L).head(L) = -vbar.transpose();
  const MatrixXd P2 = random_skew(d, rng) + P1 * P1;

  const MatrixXd Gbar = random_orthogonal(L, rng);
  MatrixXd G = MatrixXd::Identity(d, d);
  G.topLeftCorner(L, L) = Gbar;
  const MatrixXd PG1 = G * P1 * G.transpose();
  const MatrixXd PG2 = G * P2 * G.transpose();

  Params p = random_params(d, 31);
  VectorXd dd0(L);
  for (int i = 0; i < L; ++i) dd0[i] = u(rng);
  const MatrixXd DD0 = MatrixXd(dd0.asDiagonal());

  const VectorXd v = PG1.col(L).head(L);
  EXPECT_LT((v - Gbar * vbar).norm(), 1e-13);

  const MatrixXd QG = PG1.topLeftCorner(L, L);
  const MatrixXd alpha = fm::alpha_of(QG, p.mu, v, DD0);
  EXPECT_LT((alpha - alpha.transpose()).norm(), 1e-13);

  const fm::ConjugatedJets jets =
      fm::conjugated_jets(PG1, PG2, p.mu, DD0 + alpha);
  EXPECT_LT((jets.a1 - fm::a1_matrix(p.mu, v)).norm(), 1e-12);
  EXPECT_LT(jets.a2.topLeftCorner(L, L).norm(), 1e-12);

  // the second derivative is exactly the strip form ruled by the kernel
  // curve: strip = -(conjugated curvature) - 2 Gamma v, corner = |v|^2
  const VectorXd wcol = PG2.col(L);
  VectorXd wexp(d);
  wexp.head(L) = -wcol.head(L) - 2.0 * (p.mu.array() * v.array()).matrix();
  wexp[L] = -wcol[L];
  EXPECT_NEAR(wexp[L], v.squaredNorm(), 1e-12);
  EXPECT_LT((jets.a2 - fm::a2_matrix(wexp)).norm(), 1e-12);
}

TEST(Formulas, AlphaClosedCases) {
  VectorXd v(1);
  v << 0.7;
  const MatrixXd z = MatrixXd::Zero(1, 1);
  const MatrixXd a = fm::alpha_of(z, VectorXd::Zero(1), v, z);
  EXPECT_NEAR(a(0, 0), 2.0 * 0.49, 1e-15);

  // mu = 0 drops the commutator: alpha = 2 v v^T - dd0
  std::mt19937 rng(3);
  const int L = 3;
  const MatrixXd Q = random_skew(L, rng);
  VectorXd v3(L);
  v3 << 0.5, -0.2, 1.1;
  MatrixXd dd0 = MatrixXd::Identity(L, L) * 0.3;
  const MatrixXd a3 = fm::alpha_of(Q, VectorXd::Zero(L), v3, dd0);
  EXPECT_LT((a3 - (2.0 * v3 * v3.transpose() - dd0)).norm(), 1e-14);
}

TEST(Formulas, ReducedGeneratorsMatchBracketRecursion) {
  const int d = 3;
  Params p = random_params(d, 9);
  const subrq::BracketFamily fam = subrq::bracket_family(family_poly(p), 4);
  const auto all_pairs = sym_index_pairs(d);
  auto pair_index = [&](int i, int j) {
    for (int k = 0; k < static_cast<int>(all_pairs.size()); ++k)
      if (all_pairs[k] == std::make_pair(i, j)) return k;
    return -1;
  };
  auto embed = [&](const MatrixXd& diag, const MatrixXd& ur) {
    MatrixXd W = MatrixXd::Zero(2 * d, 2 * d);
    W.topLeftCorner(d, d) = diag;
    W.topRightCorner(d, d) = ur;
    W.bottomRightCorner(d, d) = -diag.transpose();
    return W;
  };
  for (const auto& [i, j] : fm::corner_free_pairs(d)) {
    const fm::FamilyBasis b = fm::family_basis(i, j, p.mu, p.v, p.w);
    const int k = pair_index(i, j);
    EXPECT_LT((fam.gen[1][k].eval(0.0) -
               embed(b.xi, MatrixXd::Zero(d, d))).norm(),
              1e-12);
    EXPECT_LT((fam.gen[2][k].eval(0.0) - embed(b.eta, -2.0 * b.gamma)).norm(),
              1e-12);
    EXPECT_LT((fam.gen[3][k].eval(0.0) - embed(b.zeta, -3.0 * b.kappa)).norm(),
              1e-12);
  }
  // the v-weighted mixed combination agrees as well
  MatrixXd closed_mix = MatrixXd::Zero(2 * d, 2 * d);
  MatrixXd rec_mix = MatrixXd::Zero(2 * d, 2 * d);
  for (int i = 0; i < d - 1; ++i) {
    const fm::FamilyBasis b = fm::family_basis(i, d - 1, p.mu, p.v, p.w);
    closed_mix += p.v[i] * embed(b.eta, -2.0 * b.gamma);
    rec_mix += p.v[i] * fam.gen[2][pair_index(i, d - 1)].eval(0.0);
  }
  EXPECT_LT((closed_mix - rec_mix).norm(), 1e-12);
}

TEST(Formulas, B5CornerMatchesBracketRecursion) {
  for (int d : {2, 3, 4}) {
    Params p = random_params(d, 200 + d);
    const subrq::BracketFamily fam = subrq::bracket_family(family_poly(p), 5);
    const auto all_pairs = sym_index_pairs(d);
    double max_corner = 0;
    for (int i = 0; i < d - 1; ++i) {
      int idx = -1;
      for (int k = 0; k < static_cast<int>(all_pairs.size()); ++k)
        if (all_pairs[k] == std::make_pair(i, i)) idx = k;
      const MatrixXd W = fam.gen[4][idx].eval(0.0);
      const double corner = W(d - 1, 2 * d - 1);
      EXPECT_NEAR(corner, fm::b5_corner(p.v, i), 1e-10) << d << " " << i;
      max_corner = std::max(max_corner, std::abs(corner));
    }
    // nonzero v forces at least one reachable corner direction
    EXPECT_GT(max_corner, 1e-3);
  }
  // pinned value for the minimal case
  Params p2;
  p2.mu = VectorXd::Zero(1);
  p2.mu << 0.4;
  p2.v = VectorXd::Zero(1);
  p2.v << 1.0;
  p2.w = VectorXd::Zero(2);
  const subrq::BracketFamily fam = subrq::bracket_family(family_poly(p2), 5);
  const MatrixXd W = fam.gen[4][0].eval(0.0);
  EXPECT_NEAR(W(1, 3), -12.0, 1e-12);
  EXPECT_NEAR(fm::b5_corner(p2.v, 0), -12.0, 1e-15);
  // vanishing component gives a vanishing corner
  VectorXd vz(2);
  vz << 0.0, 0.8;
  EXPECT_EQ(fm::b5_corner(vz, 0), 0.0);
}

TEST(Formulas, MMatrixScalarIdentity) {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorXd mu(1);
  mu << 0.9;
  for (int k = 0; k < 100; ++k) {
    VectorXd v(1), w(2);
    double raw = u(rng);
    v[0] = (raw >= 0 ? 0.05 + raw : -0.05 + raw);
    w << u(rng), u(rng);
    const fm::MMatrix m = fm::m_matrix(mu, v, w);
    const double want = 2.0 * w[1] - 3.0 * v[0] * v[0];
    EXPECT_NEAR(m.det, want, 1e-12 * std::max(1.0, std::abs(want)));
    // with the corner pinned by the unit-kernel constraint the value
    // collapses to -v^2
    w[1] = v[0] * v[0];
    EXPECT_NEAR(fm::m_matrix(mu, v, w).det, -v[0] * v[0],
                1e-12 * std::max(1.0, v[0] * v[0]));
  }
}

TEST(Formulas, MMatrixPreconditions) {
  VectorXd mu(2), v(2), w(3);
  mu << 0.5, -0.5;  // |mu_1| = |mu_2| pole
  v << 1.0, 1.0;
  w << 0.1, 0.2, 0.3;
  EXPECT_THROW(fm::m_matrix(mu, v, w), DomainError);
  mu << 0.5, 0.9;
  v << 1.0, 0.0;  // vanishing v entry
  EXPECT_THROW(fm::m_matrix(mu, v, w), DomainError);
}

// coordinates of [D S; 0 -D^T] with S symmetric, zero corner
Eigen::VectorXd reduced_coords(const MatrixXd& W, int d) {
  const MatrixXd D = W.topLeftCorner(d, d), S = W.topRightCorner(d, d);
  Eigen::VectorXd out(fm::reduced_target_dim(d));
  int k = 0;
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < d; ++r) out[k++] = D(r, c);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      if (i == d - 1 && j == d - 1) continue;
      out[k++] = S(i, j);
    }
  return out;
}

TEST(Formulas, MMatrixMatchesSystemReduction) {
  // m_matrix must equal, entry by entry, the Schur reduction of the full
  // coefficient system of the generating set onto the fourth-level strip
  // coefficients, eliminating through the remaining equations.
  for (int d : {3, 4, 5}) {
    for (unsigned seed : {1u, 2u}) {
      Params p = random_params(d, 700 + 13 * seed + d);
      const int L = d - 1, n = fm::reduced_target_dim(d);
      const auto gens = fm::reduced_generators(d, p.mu, p.v, p.w);
      ASSERT_EQ(static_cast<int>(gens.size()), n);
      MatrixXd G(n, n);
      for (int k = 0; k < n; ++k) G.col(k) = reduced_coords(gens[k], d);

      // consistency rows: diagonal-block entries (d-1, i); strip columns:
      // fourth-level coefficients at the mixed pairs (i, d-1)
      const auto cfp = fm::corner_free_pairs(d);
      const int b4base =
          static_cast<int>(cfp.size() + fm::interior_pairs(d).size());
      std::vector<int> rows_cons, cols_strip;
      for (int i = 0; i < L; ++i) rows_cons.push_back(i * d + (d - 1));
      for (int k = 0; k < static_cast<int>(cfp.size()); ++k)
        if (cfp[k].second == d - 1) cols_strip.push_back(b4base + k);
      std::vector<int> rows_keep, cols_keep;
      for (int r = 0; r < n; ++r)
        if (std::find(rows_cons.begin(), rows_cons.end(), r) ==
            rows_cons.end())
          rows_keep.push_back(r);
      for (int c = 0; c < n; ++c)
        if (std::find(cols_strip.begin(), cols_strip.end(), c) ==
            cols_strip.end())
          cols_keep.push_back(c);
      const int nk = n - L;
      MatrixXd A(nk, nk), B(nk, L), C(L, nk), D2(L, L);
      for (int i = 0; i < nk; ++i) {
        for (int j = 0; j < nk; ++j) A(i, j) = G(rows_keep[i], cols_keep[j]);
        for (int j = 0; j < L; ++j) B(i, j) = G(rows_keep[i], cols_strip[j]);
      }
      for (int i = 0; i < L; ++i) {
        for (int j = 0; j < nk; ++j) C(i, j) = G(rows_cons[i], cols_keep[j]);
        for (int j = 0; j < L; ++j) D2(i, j) = G(rows_cons[i], cols_strip[j]);
      }
      Eigen::FullPivLU<MatrixXd> lu(A);
      ASSERT_TRUE(lu.isInvertible()) << d << " " << seed;
      const MatrixXd schur = D2 - C * lu.solve(B);
      const fm::MMatrix mm = fm::m_matrix(p.mu, p.v, p.w);
      EXPECT_LT((schur - mm.m).norm(), 1e-11 * std::max(1.0, schur.norm()))
          << d << " " << seed;
    }
  }
}

TEST(Formulas, MMatrixDetEquivalentToGeneratorRank) {
  // generic samples: nonzero determinant and full reduced rank
  for (int d : {3, 4}) {
    for (unsigned seed = 0; seed < 10; ++seed) {
      Params p = random_params(d, 300 + 17 * seed + d);
      const fm::MMatrix m = fm::m_matrix(p.mu, p.v, p.w);
      const subrq::SpanReport rep =
          subrq::span_test(fm::reduced_generators(d, p.mu, p.v, p.w), d);
      ASSERT_GT(std::abs(m.det), 1e-6) << d << " " << seed;
      EXPECT_EQ(rep.rank, fm::reduced_target_dim(d)) << d << " " << seed;
    }
  }

  // constructed rank drop at d = 2: the corner strip solves det = 0
  {
    VectorXd mu(1), v(1), w(2);
    mu << 0.9;
    v << 0.7;
    w << 0.31, 1.5 * 0.49;
    const fm::MMatrix m = fm::m_matrix(mu, v, w);
    EXPECT_NEAR(m.det, 0.0, 1e-14);
    const subrq::SpanReport rep =
        subrq::span_test(fm::reduced_generators(2, mu, v, w), 2);
    EXPECT_LT(rep.rank, fm::reduced_target_dim(2));
  }

  // constructed rank drop at d = 3: root of det along a line in w-space.
  // det is polynomial in the line parameter, so not every line meets the
  // singular set; scan a few seeded ones for a sign change, then bisect.
  {
    const int d = 3;
    bool found = false;
    for (unsigned seed = 555; seed < 565 && !found; ++seed) {
      Params p = random_params(d, seed);
      for (int comp = 0; comp < d && !found; ++comp) {
        auto det_at = [&](double s) {
          VectorXd w = p.w;
          w[comp] += s;
          return fm::m_matrix(p.mu, p.v, w).det;
        };
        double lo = 0.0, hi = 0.0;
        double prev = det_at(-20.0), sprev = -20.0;
        for (double s = -19.0; s <= 20.0; s += 1.0) {
          double cur = det_at(s);
          if (prev * cur < 0.0) {
            lo = sprev;
            hi = s;
            found = true;
            break;
          }
          prev = cur;
          sprev = s;
        }
        if (!found) continue;
        double flo = det_at(lo);
        for (int it = 0; it < 200; ++it) {
          double mid = 0.5 * (lo + hi);
          double fmid = det_at(mid);
          if (flo * fmid <= 0) {
            hi = mid;
          } else {
            lo = mid;
            flo = fmid;
          }
        }
        VectorXd wroot = p.w;
        wroot[comp] += 0.5 * (lo + hi);
        EXPECT_LT(std::abs(fm::m_matrix(p.mu, p.v, wroot).det), 1e-8);
        const subrq::SpanReport at_root = subrq::span_test(
            fm::reduced_generators(d, p.mu, p.v, wroot), d, 1e-7);
        EXPECT_LT(at_root.rank, fm::reduced_target_dim(d));
        const subrq::SpanReport away = subrq::span_test(
            fm::reduced_generators(d, p.mu, p.v, p.w), d, 1e-7);
        EXPECT_EQ(away.rank, fm::reduced_target_dim(d));
      }
    }
    ASSERT_TRUE(found) << "no seeded line crossed the singular set";
  }
}

TEST(Formulas, LimitMatrixMatchesScaledFamily) {
  // minimal case: the scaled family is constant in t and equal to the limit
  {
    VectorXd mu(1), v(1), w0(1);
    mu << 1.3;
    v << 0.6;
    w0 << 0.25;
    const fm::MMatrixLimit lim = fm::m_bar(mu, v);
    EXPECT_NEAR(lim.det, -0.36, 1e-14);
    for (double t : {1.0, 1e3, 1e6}) {
      const fm::MMatrix m =
          fm::m_matrix(t * mu, v, fm::w_at_scale(t * mu, v, w0, 1.0));
      EXPECT_NEAR(m.det, lim.det, 1e-12);
    }
  }
  // slope of the gap in log-log once poles are far away
  for (int d : {3, 4}) {
    Params p = random_params(d, 900 + d);
    const VectorXd w0 = p.w.head(d - 1);
    const fm::MMatrixLimit lim = fm::m_bar(p.mu, p.v);
    std::vector<double> ts = {1e2, 1e3, 1e4, 1e5};
    std::vector<double> gaps;
    for (double t : ts) {
      const fm::MMatrix m = fm::m_matrix(
          t * p.mu, p.v, fm::w_at_scale(p.mu, p.v, w0, t));
      gaps.push_back((m.m - lim.m).norm());
    }
    // least-squares slope of log gap vs log t
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = static_cast<int>(ts.size());
    for (int k = 0; k < n; ++k) {
      double x = std::log10(ts[k]), y = std::log10(gaps[k]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    EXPECT_NEAR(slope, -1.0, 0.1) << d;
    EXPECT_LT(gaps.back(), 1e-3) << d;
  }
}

TEST(Formulas, LimitTabulationSelectionDiagnostic) {
  // The limit of the neighboring reduction variant whose f carries
  // +3 mu_i v_j instead of -3 mu_i v_j looks plausible entrywise but is
  // not the limit of this m_matrix: its gap stalls at a constant while
  // the implemented limit's gap decays.
  const int d = 3;
  Params p = random_params(d, 1234);
  const int L = d - 1;
  MatrixXd alt = MatrixXd::Zero(L, L);
  for (int i = 0; i < L; ++i) {
    double diag = 2.0 * p.v.squaredNorm() - 3.0 * p.v[i] * p.v[i];
    for (int j = 0; j < L; ++j) {
      if (j == i) continue;
      const double den =
          3.0 * (p.mu[i] * p.mu[i] - p.mu[j] * p.mu[j]);
      alt(i, j) = p.v[i] * p.v[j] *
                  (-11.0 * p.mu[i] * p.mu[i] - 19.0 * p.mu[i] * p.mu[j] +
                   6.0 * p.mu[j] * p.mu[j]) /
                  den;
      diag += p.v[j] * p.v[j] *
              (15.0 * p.mu[i] * p.mu[i] + 5.0 * p.mu[i] * p.mu[j] +
               4.0 * p.mu[j] * p.mu[j]) /
              den;
    }
    alt(i, i) = diag;
  }
  const fm::MMatrixLimit lim = fm::m_bar(p.mu, p.v);
  const VectorXd w0 = p.w.head(L);
  auto gap = [&](const MatrixXd& target, double t) {
    const fm::MMatrix m =
        fm::m_matrix(t * p.mu, p.v, fm::w_at_scale(p.mu, p.v, w0, t));
    return (m.m - target).norm();
  };
  const double g3 = gap(lim.m, 1e3), g4 = gap(lim.m, 1e4);
  const double a3 = gap(alt, 1e3), a4 = gap(alt, 1e4);
  EXPECT_LT(g4 / g3, 0.2);          // decays like 1/t
  EXPECT_GT(a4 / a3, 0.8);          // stalls
  EXPECT_GT(a4, 10.0 * g4);
}

TEST(Formulas, LimitHomogeneityAndFactorization) {
  for (int d : {3, 4}) {
    Params p = random_params(d, 77 + d);
    const fm::MMatrixLimit base = fm::m_bar(p.mu, p.v);
    const double s = 1.7;
    const fm::MMatrixLimit scaled = fm::m_bar(p.mu, s * p.v);
    EXPECT_LT((scaled.m - s * s * base.m).norm(), 1e-10 * base.m.norm());
    const double expo = 2.0 * (d - 1);
    EXPECT_NEAR(scaled.det, std::pow(s, expo) * base.det,
                1e-10 * std::abs(std::pow(s, expo) * base.det));
  }
  // zeroed trailing components decouple the limit into diagonal blocks
  {
    const int d = 4, L = d - 1;
    Params p = random_params(d, 88);
    VectorXd v = p.v;
    v[L - 1] = 0.0;
    const fm::MMatrixLimit lim = fm::m_bar(p.mu, v);
    for (int j = 0; j < L - 1; ++j) {
      EXPECT_EQ(lim.m(L - 1, j), 0.0);
      EXPECT_EQ(lim.m(j, L - 1), 0.0);
    }
    const double det2 = lim.m.topLeftCorner(2, 2).determinant();
    EXPECT_NEAR(lim.det, lim.m(L - 1, L - 1) * det2,
                1e-12 * std::abs(lim.det));
  }
}
