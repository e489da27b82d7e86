#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "subrq/common.hpp"

namespace subrq {

// Closed-form layer for the quadratic jet of a rank-deficient symmetric
// family
//
//   A(t) = A0 + t A1 + (t^2/2) A2,
//   A0 = diag(I_{d-1}, 0),
//   A1 = [diag(mu)  -v; -v^T  0],
//   A2 = [0 w] + [0; w^T]   (last column and last row w, doubled corner),
//
// with mu, v in R^{d-1} and w in R^d. Everything below expands products of
// these blocks with the elementary symmetric directions E_ij in the
// single-entry basis F_ij. Each formula is validated in the tests against
// literal matrix arithmetic and against the bracket recursion; the closed
// forms here deliberately share no code with either oracle.
namespace formulas {

// ---------------------------------------------------------------------------
// family builders

inline MatrixXd a0_matrix(int d) {
  MatrixXd m = MatrixXd::Identity(d, d);
  m(d - 1, d - 1) = 0.0;
  return m;
}

inline MatrixXd a1_matrix(const VectorXd& mu, const VectorXd& v) {
  const int d = static_cast<int>(mu.size()) + 1;
  if (v.size() != d - 1) throw DomainError("a1_matrix: mu and v sizes differ");
  MatrixXd m = MatrixXd::Zero(d, d);
  m.topLeftCorner(d - 1, d - 1) = mu.asDiagonal();
  m.col(d - 1).head(d - 1) = -v;
  m.row(d - 1).head(d - 1) = -v.transpose();
  return m;
}

inline MatrixXd a2_matrix(const VectorXd& w) {
  const int d = static_cast<int>(w.size());
  MatrixXd m = MatrixXd::Zero(d, d);
  m.col(d - 1) += w;
  m.row(d - 1) += w.transpose();
  return m;
}

// ---------------------------------------------------------------------------
// index bookkeeping: symmetric pairs i <= j with the corner (d-1,d-1)
// removed, and the interior pairs i <= j <= d-2.

inline std::vector<std::pair<int, int>> corner_free_pairs(int d) {
  std::vector<std::pair<int, int>> out;
  for (const auto& [i, j] : sym_index_pairs(d))
    if (!(i == d - 1 && j == d - 1)) out.emplace_back(i, j);
  return out;
}

inline std::vector<std::pair<int, int>> interior_pairs(int d) {
  return sym_index_pairs(d - 1);
}

// ---------------------------------------------------------------------------
// products of the jet coefficients with one symmetric direction E_ij.
// All five are given entrywise; i <= j required.
//
//   xi    = A0 E_ij
//   eta   = A1 E_ij
//   zeta  = A2 E_ij
//   gamma = A0 E_ij A0
//   kappa = A1 E_ij A0 + A0 E_ij A1

struct FamilyBasis {
  MatrixXd xi, eta, zeta, gamma, kappa;
};

inline FamilyBasis family_basis(int i, int j, const VectorXd& mu,
                                const VectorXd& v, const VectorXd& w) {
  const int d = static_cast<int>(w.size());
  const int L = d - 1;
  if (mu.size() != L || v.size() != L)
    throw DomainError("family_basis: parameter sizes disagree");
  if (i < 0 || j < i || j >= d)
    throw DomainError("family_basis: need 0 <= i <= j < d");

  FamilyBasis b;
  b.xi = MatrixXd::Zero(d, d);
  b.eta = MatrixXd::Zero(d, d);
  b.zeta = MatrixXd::Zero(d, d);
  b.gamma = MatrixXd::Zero(d, d);
  b.kappa = MatrixXd::Zero(d, d);

  if (j <= L - 1) {
    // interior pair (covers i == j: E_ii has a doubled diagonal entry)
    b.xi += sym_entry(d, i, j);
    b.eta(i, j) += mu[i];
    b.eta(j, i) += mu[j];
    b.eta(L, j) -= v[i];
    b.eta(L, i) -= v[j];
    b.zeta(L, j) += w[i];
    b.zeta(L, i) += w[j];
    b.gamma += sym_entry(d, i, j);
    b.kappa += (mu[i] + mu[j]) * sym_entry(d, i, j);
    b.kappa -= v[i] * sym_entry(d, j, L);
    b.kappa -= v[j] * sym_entry(d, i, L);
  } else if (i <= L - 1) {
    // mixed pair (i, last)
    b.xi(i, L) += 1.0;
    b.eta(i, L) += mu[i];
    b.eta(L, L) -= v[i];
    for (int k = 0; k < L; ++k) b.eta(k, i) -= v[k];
    for (int k = 0; k < L; ++k) b.zeta(k, i) += w[k];
    b.zeta(L, L) += w[i];
    b.zeta(L, i) += 2.0 * w[L];
    for (int k = 0; k < L; ++k) b.kappa -= v[k] * sym_entry(d, k, i);
  } else {
    // corner pair (last, last): xi, gamma, kappa vanish
    for (int k = 0; k < L; ++k) b.eta(k, L) -= 2.0 * v[k];
    for (int k = 0; k < L; ++k) b.zeta(k, L) += 2.0 * w[k];
    b.zeta(L, L) += 4.0 * w[L];
  }
  return b;
}

// ---------------------------------------------------------------------------
// Pairing reduction: for symmetric coefficients s_ij on i <= j <= n-1,
//   sum_{i<=j} s_ij (w_i x_j + x_i w_j) = sum_i diag_pairing(s, w)_i x_i,
// with diag_pairing(s, w)_i = 2 s_ii w_i + sum_{j != i} s_ij w_j.

inline VectorXd diag_pairing(const MatrixXd& s, const VectorXd& w) {
  const int n = static_cast<int>(w.size());
  if (s.rows() != n || s.cols() != n)
    throw DomainError("diag_pairing: size mismatch");
  VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    double acc = 2.0 * s(i, i) * w[i];
    for (int j = 0; j < n; ++j)
      if (j != i) acc += s(i, j) * w[j];
    out[i] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregated linear combinations over the corner-free pairs. Coefficient
// vectors a, b, c are indexed parallel to corner_free_pairs(d). Returns
//   diag_block  = sum a xi + b eta + c zeta      (d x d, general)
//   upper_right = sum 2 b gamma + 3 c kappa      (d x d, symmetric, zero
//                                                 corner)
// whose joint vanishing is the linear-independence condition for the
// reduced generating set below.

struct BlockSums {
  MatrixXd diag_block;
  MatrixXd upper_right;
};

inline BlockSums aggregate_sums(int d, const VectorXd& mu, const VectorXd& v,
                                const VectorXd& w, const VectorXd& a,
                                const VectorXd& b, const VectorXd& c) {
  const int L = d - 1;
  const auto pairs = corner_free_pairs(d);
  const int np = static_cast<int>(pairs.size());
  if (a.size() != np || b.size() != np || c.size() != np)
    throw DomainError("aggregate_sums: coefficient count mismatch");

  // unpack coefficients into symmetric (L x L) tables + last-column strips
  MatrixXd as = MatrixXd::Zero(L, L), bs = MatrixXd::Zero(L, L),
           cs = MatrixXd::Zero(L, L);
  VectorXd ad = VectorXd::Zero(L), bd = VectorXd::Zero(L),
           cd = VectorXd::Zero(L);
  for (int k = 0; k < np; ++k) {
    const auto& [i, j] = pairs[k];
    if (j <= L - 1) {
      as(i, j) = as(j, i) = a[k];
      bs(i, j) = bs(j, i) = b[k];
      cs(i, j) = cs(j, i) = c[k];
    } else {
      ad[i] = a[k];
      bd[i] = b[k];
      cd[i] = c[k];
    }
  }
  const VectorXd bbar = diag_pairing(bs, v);
  const VectorXd cbar_w = diag_pairing(cs, w.head(L));
  const VectorXd cbar_v = diag_pairing(cs, v);

  BlockSums out;
  out.diag_block = MatrixXd::Zero(d, d);
  out.upper_right = MatrixXd::Zero(d, d);
  MatrixXd& D = out.diag_block;
  MatrixXd& U = out.upper_right;

  for (int i = 0; i < L; ++i) {
    for (int j = i + 1; j < L; ++j) {
      D(i, j) += as(i, j) + mu[i] * bs(i, j) - bd[j] * v[i] + w[i] * cd[j];
      D(j, i) += as(i, j) + mu[j] * bs(i, j) - bd[i] * v[j] + w[j] * cd[i];
      U += (3.0 * ((mu[i] + mu[j]) * cs(i, j) - cd[i] * v[j] - cd[j] * v[i]) +
            2.0 * bs(i, j)) *
           sym_entry(d, i, j);
    }
    D(i, i) += 2.0 * as(i, i) + 2.0 * mu[i] * bs(i, i) - bd[i] * v[i] +
               w[i] * cd[i];
    D(i, L) += ad[i] + mu[i] * bd[i];
    D(L, i) += -bbar[i] + cbar_w[i] + 2.0 * cd[i] * w[L];
    D(L, L) += -bd[i] * v[i] + cd[i] * w[i];
    U += (3.0 * (2.0 * mu[i] * cs(i, i) - cd[i] * v[i]) + 2.0 * bs(i, i)) *
         sym_entry(d, i, i);
    U -= 3.0 * cbar_v[i] * sym_entry(d, i, L);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Jet of the conjugated family P(t) L(t) P(t)^T at t = 0, in closed block
// form. Inputs are the first/second t-derivatives of an orthogonal curve
// P (P(0) = I) and of the diagonal factor L(t) = diag(D(t), 0) with
// D(0) = I_{d-1}; `d2` may carry a full symmetric upper block (the
// second derivative of the upper-left factor), `d1` is its diagonal first
// derivative. The identity used for the second derivative requires the
// orthogonality constraints P1 + P1^T = 0 and sym(P2) = -P1 P1^T.

struct ConjugatedJets {
  MatrixXd a1;  // first t-derivative at 0
  MatrixXd a2;  // second t-derivative at 0
};

inline ConjugatedJets conjugated_jets(const MatrixXd& P1, const MatrixXd& P2,
                                      const VectorXd& d1,
                                      const MatrixXd& d2) {
  const int d = static_cast<int>(P1.rows());
  const int L = d - 1;
  if (P2.rows() != d || d1.size() != L || d2.rows() != L)
    throw DomainError("conjugated_jets: size mismatch");
  const double scale = std::max(1.0, P1.norm() + P2.norm());
  if ((P1 + P1.transpose()).norm() > 1e-10 * scale)
    throw DomainError("conjugated_jets: P1 must be skew-symmetric");
  if ((P2 + P2.transpose() + 2.0 * P1 * P1.transpose()).norm() >
      1e-10 * scale * scale)
    throw DomainError("conjugated_jets: P2 violates orthogonality");

  const MatrixXd Q = P1.topLeftCorner(L, L);
  const VectorXd v = P1.col(L).head(L);
  const VectorXd wcol = P2.col(L);
  const MatrixXd Dd1 = MatrixXd(d1.asDiagonal());

  ConjugatedJets out;
  out.a1 = MatrixXd::Zero(d, d);
  out.a1.topLeftCorner(L, L) = Dd1;
  out.a1.col(L).head(L) = -v;
  out.a1.row(L).head(L) = -v.transpose();

  MatrixXd a2 = MatrixXd::Zero(d, d);
  a2.col(L) -= wcol;
  a2.row(L) -= wcol.transpose();
  a2.topLeftCorner(L, L) -= 2.0 * v * v.transpose();
  a2.topLeftCorner(L, L) += 2.0 * (Q * Dd1 - Dd1 * Q) + d2;
  a2.col(L).head(L) += -2.0 * Dd1 * v;
  a2.row(L).head(L) += -2.0 * (Dd1 * v).transpose();
  out.a2 = a2;
  return out;
}

// The symmetric correction that cancels the upper-left block of the second
// derivative above: with Q the skew upper block of P1, Gamma = diag(mu),
// v the conjugated kernel velocity and dd0 the plain second derivative of
// the diagonal factor,
//   alpha = 2 v v^T - 2 (Q Gamma - Gamma Q) - dd0.
inline MatrixXd alpha_of(const MatrixXd& Q, const VectorXd& mu,
                         const VectorXd& v, const MatrixXd& dd0) {
  const int L = static_cast<int>(mu.size());
  if (Q.rows() != L || v.size() != L || dd0.rows() != L)
    throw DomainError("alpha_of: size mismatch");
  const MatrixXd G = MatrixXd(mu.asDiagonal());
  return 2.0 * v * v.transpose() - 2.0 * (Q * G - G * Q) - dd0;
}

// ---------------------------------------------------------------------------
// The elimination matrix of the reduced generating set. Entries carry
// simple poles at |mu_i| = |mu_j|; its determinant vanishing is equivalent
// to a rank drop of reduced_generators below. For d = 2 the matrix is the
// scalar 2 w_last - 3 v_1^2.

struct MMatrix {
  MatrixXd f;  // (d-1) x (d-1), zero diagonal
  MatrixXd g;  // (d-1) x (d-1), zero diagonal
  MatrixXd m;  // (d-1) x (d-1)
  double det = 0.0;
};

inline MMatrix m_matrix(const VectorXd& mu, const VectorXd& v,
                        const VectorXd& w) {
  const int L = static_cast<int>(mu.size());
  if (v.size() != L || w.size() != L + 1)
    throw DomainError("m_matrix: parameter sizes disagree");
  for (int i = 0; i < L; ++i)
    if (v[i] == 0.0)
      throw DomainError("m_matrix: requires nonzero v entries");
  for (int i = 0; i < L; ++i)
    for (int j = i + 1; j < L; ++j)
      if (mu[i] == mu[j] || mu[i] == -mu[j])
        throw DomainError("m_matrix: pole at mu_i = +/- mu_j");

  MMatrix out;
  out.f = MatrixXd::Zero(L, L);
  out.g = MatrixXd::Zero(L, L);
  out.m = MatrixXd::Zero(L, L);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      if (i == j) continue;
      out.f(i, j) = (v[i] * w[j] - w[i] * v[j]) / v[i] - 3.0 * mu[i] * v[j];
      out.g(i, j) =
          (2.0 / 3.0) * out.f(i, j) + v[j] * (mu[i] + mu[j]);
    }
  for (int i = 0; i < L; ++i) {
    double diag = 2.0 * w[L] - 3.0 * v[i] * v[i];
    for (int j = 0; j < L; ++j) {
      if (j == i) continue;
      const double sum_pole = mu[i] + mu[j];
      const double diff_pole = mu[i] * mu[i] - mu[j] * mu[j];
      out.m(i, j) =
          out.f(i, j) * v[i] / sum_pole + out.g(i, j) * w[i] / diff_pole;
      diag += out.f(i, j) * v[j] / sum_pole - out.g(i, j) * w[j] / diff_pole;
    }
    out.m(i, i) = diag;
  }
  out.det = out.m.determinant();
  return out;
}

// The forced drift of w under the scaling mu -> t mu: the strip couples to
// Gamma v linearly in t while the corner stays pinned at ||v||^2.
inline VectorXd w_at_scale(const VectorXd& mu, const VectorXd& v,
                           const VectorXd& w_const, double t) {
  const int L = static_cast<int>(mu.size());
  if (v.size() != L || w_const.size() != L)
    throw DomainError("w_at_scale: size mismatch");
  VectorXd w(L + 1);
  w.head(L) = w_const - 2.0 * t * (mu.array() * v.array()).matrix();
  w[L] = v.squaredNorm();
  return w;
}

// Exact t -> infinity limit of m_matrix(t mu, v, w_at_scale(mu, v, ., t)).
// Independent of the constant strip of w; derivation: with the drift
// w_i -> -2 t mu_i v_i the numerators grow like
//   f_ij -> -t v_j (mu_i + 2 mu_j),  g_ij -> t v_j (mu_i - mu_j) / 3,
// so only simple poles at mu_i + mu_j = 0 survive, and the entries are
// scale-invariant in mu. The corner offset 2 w_last = 2 |v|^2 persists.
struct MMatrixLimit {
  MatrixXd m;
  double det = 0.0;
};

inline MMatrixLimit m_bar(const VectorXd& mu, const VectorXd& v) {
  const int L = static_cast<int>(mu.size());
  if (v.size() != L) throw DomainError("m_bar: size mismatch");
  for (int i = 0; i < L; ++i)
    for (int j = i + 1; j < L; ++j)
      if (mu[i] == mu[j] || mu[i] == -mu[j])
        throw DomainError("m_bar: pole at mu_i = +/- mu_j");
  MMatrixLimit out;
  out.m = MatrixXd::Zero(L, L);
  const double vnorm2 = v.squaredNorm();
  for (int i = 0; i < L; ++i) {
    double diag = 2.0 * vnorm2 - 3.0 * v[i] * v[i];
    for (int j = 0; j < L; ++j) {
      if (j == i) continue;
      const double den = 3.0 * (mu[i] + mu[j]);
      out.m(i, j) = -v[i] * v[j] * (5.0 * mu[i] + 6.0 * mu[j]) / den;
      diag += -v[j] * v[j] * (3.0 * mu[i] + 4.0 * mu[j]) / den;
    }
    out.m(i, i) = diag;
  }
  out.det = out.m.determinant();
  return out;
}

// ---------------------------------------------------------------------------
// Corner entry of the fifth bracket's upper-right block for the diagonal
// direction E_ii, i <= d-2: the A2 terms vanish there because A0 kills the
// last row and column, leaving -6 (A1 E_ii A1)_corner = -12 v_i^2.
inline double b5_corner(const VectorXd& v, int i) {
  if (i < 0 || i >= v.size()) throw DomainError("b5_corner: index range");
  return -12.0 * v[i] * v[i];
}

// ---------------------------------------------------------------------------
// The reduced generating set evaluated at t = 0, assembled from the closed
// forms: second-level generators over all corner-free pairs, third-level
// over interior pairs, fourth-level over corner-free pairs, and the single
// v-weighted combination of third-level mixed pairs. Full column rank
// (= reduced_target_dim) is equivalent to det m_matrix != 0.

inline int reduced_target_dim(int d) { return d * d + d * (d + 1) / 2 - 1; }

inline std::vector<MatrixXd> reduced_generators(int d, const VectorXd& mu,
                                                const VectorXd& v,
                                                const VectorXd& w) {
  const int L = d - 1;
  auto sp_embed = [d](const MatrixXd& diag, const MatrixXd& ur) {
    MatrixXd W = MatrixXd::Zero(2 * d, 2 * d);
    W.topLeftCorner(d, d) = diag;
    W.topRightCorner(d, d) = ur;
    W.bottomRightCorner(d, d) = -diag.transpose();
    return W;
  };
  std::vector<MatrixXd> gens;
  for (const auto& [i, j] : corner_free_pairs(d)) {
    const FamilyBasis b = family_basis(i, j, mu, v, w);
    gens.push_back(sp_embed(b.xi, MatrixXd::Zero(d, d)));
  }
  for (const auto& [i, j] : interior_pairs(d)) {
    const FamilyBasis b = family_basis(i, j, mu, v, w);
    gens.push_back(sp_embed(b.eta, -2.0 * b.gamma));
  }
  for (const auto& [i, j] : corner_free_pairs(d)) {
    const FamilyBasis b = family_basis(i, j, mu, v, w);
    gens.push_back(sp_embed(b.zeta, -3.0 * b.kappa));
  }
  MatrixXd mixed = MatrixXd::Zero(2 * d, 2 * d);
  for (int i = 0; i < L; ++i) {
    const FamilyBasis b = family_basis(i, d - 1, mu, v, w);
    mixed += v[i] * sp_embed(b.eta, -2.0 * b.gamma);
  }
  gens.push_back(mixed);
  return gens;
}

}  // namespace formulas
}  // namespace subrq
