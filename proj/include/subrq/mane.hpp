#pragma once

#include <random>

#include "subrq/jets.hpp"

namespace subrq {

namespace detail {

// [TL TR; BL BR] from d x d polynomial blocks.
inline MatPoly block2(const MatPoly& tl, const MatPoly& tr, const MatPoly& bl,
                      const MatPoly& br) {
  int d = tl.rows();
  int deg = std::max(std::max(tl.degree(), tr.degree()),
                     std::max(bl.degree(), br.degree()));
  std::vector<MatrixXd> coeffs(deg + 1, MatrixXd::Zero(2 * d, 2 * d));
  for (int k = 0; k <= deg; ++k) {
    coeffs[k].topLeftCorner(d, d) = tl.coeff_or_zero(k);
    coeffs[k].topRightCorner(d, d) = tr.coeff_or_zero(k);
    coeffs[k].bottomLeftCorner(d, d) = bl.coeff_or_zero(k);
    coeffs[k].bottomRightCorner(d, d) = br.coeff_or_zero(k);
  }
  return MatPoly::from_coeffs(std::move(coeffs));
}

inline MatPoly const_poly(const MatrixXd& m) {
  return MatPoly::from_coeffs({m});
}

}  // namespace detail

// Iterated perturbation brackets of the block system X' = [0 A; 0 0] X:
// the first-order generator for the symmetric direction E is [0 0; E 0],
// and each further one is [Y, B] + B' with Y = [0 A; 0 0]. All entries are
// exact polynomials in t.
struct BracketFamily {
  int d = 0;
  int lmax = 0;
  std::vector<std::pair<int, int>> pairs;          // symmetric index pairs
  std::vector<std::vector<MatPoly>> gen;           // gen[l-1][pair]

  // All generators evaluated at a time, in order (l, pair).
  std::vector<MatrixXd> at(double t) const {
    std::vector<MatrixXd> out;
    for (const auto& level : gen)
      for (const auto& g : level) out.push_back(g.eval(t));
    return out;
  }
};

inline BracketFamily bracket_family(const MatPoly& A, int lmax) {
  const int d = A.rows();
  BracketFamily fam;
  fam.d = d;
  fam.lmax = lmax;
  fam.pairs = sym_index_pairs(d);
  MatPoly zero = detail::const_poly(MatrixXd::Zero(d, d));
  MatPoly Y = detail::block2(zero, A, zero, zero);
  std::vector<MatPoly> level;
  for (const auto& [i, j] : fam.pairs)
    level.push_back(detail::block2(zero, zero,
                                   detail::const_poly(sym_entry(d, i, j)),
                                   zero));
  fam.gen.push_back(level);
  for (int l = 2; l <= lmax; ++l) {
    std::vector<MatPoly> next;
    next.reserve(level.size());
    for (const auto& b : fam.gen.back())
      next.push_back(comm(Y, b) + b.derivative());
    fam.gen.push_back(std::move(next));
  }
  return fam;
}

// Rank of a family inside the symplectic algebra: each member must have the
// block form [M S; T -M^T] with S, T symmetric; coordinates are vec(M) and
// the upper triangles of S and T.
struct SpanReport {
  int d = 0;
  int dim_target = 0;  // 2 d^2 + d
  int rank = 0;
  bool spans = false;
  double smin_rel = 0;             // sigma_target / sigma_1 when spanning
  double max_membership_defect = 0;
  VectorXd kernel_witness;         // coordinates of an unreached direction
};

inline VectorXd sp_coordinates(const MatrixXd& W, int d) {
  VectorXd v(2 * d * d + d);
  int at = 0;
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) v[at++] = W(i, j);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) v[at++] = W(i, d + j);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) v[at++] = W(d + i, j);
  return v;
}

inline SpanReport span_test(const std::vector<MatrixXd>& gens, int d,
                            double svd_rel_tol = 1e-8,
                            double member_tol = 1e-9) {
  SpanReport rep;
  rep.d = d;
  rep.dim_target = 2 * d * d + d;
  if (gens.empty()) return rep;
  MatrixXd J = symplectic_J(d);
  MatrixXd coords(rep.dim_target, static_cast<int>(gens.size()));
  for (std::size_t k = 0; k < gens.size(); ++k) {
    const MatrixXd& W = gens[k];
    double defect = (J * W + W.transpose() * J).norm() /
                    std::max(1.0, W.norm());
    rep.max_membership_defect = std::max(rep.max_membership_defect, defect);
    coords.col(static_cast<int>(k)) = sp_coordinates(W, d);
  }
  if (rep.max_membership_defect > member_tol)
    throw DomainError("family member leaves the symplectic algebra");
  Eigen::JacobiSVD<MatrixXd> svd(coords, Eigen::ComputeFullU);
  VectorXd sv = svd.singularValues();
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > svd_rel_tol * sv[0]) ++rep.rank;
  rep.spans = rep.rank == rep.dim_target;
  if (rep.spans) {
    rep.smin_rel = sv[rep.dim_target - 1] / sv[0];
  } else {
    rep.kernel_witness = svd.matrixU().col(rep.dim_target - 1);
  }
  return rep;
}

// A |-> G A G^T for block G = diag(Gbar, 1); the reachable span transforms
// by conjugation, so its rank is invariant.
inline MatPoly conjugate_curve(const MatPoly& A, const MatrixXd& G) {
  std::vector<MatrixXd> coeffs;
  for (int k = 0; k <= A.degree(); ++k)
    coeffs.push_back(G * A.coeff(k) * G.transpose());
  return MatPoly::from_coeffs(std::move(coeffs));
}

inline MatrixXd embed_rotation_block(const MatrixXd& gbar) {
  int d = gbar.rows() + 1;
  MatrixXd G = MatrixXd::Identity(d, d);
  G.topLeftCorner(d - 1, d - 1) = gbar;
  return G;
}

// Random curve of symmetric matrices with a prescribed one-dimensional
// kernel curve: A(t) = P(t) diag(lambda_1..lambda_{d-1}, 0) P(t)^T where the
// last column of the orthonormal P(t) follows the sampled direction n(t).
struct KernelCurveSample {
  MatPoly A;
  std::vector<Series> n;  // unit kernel direction, Series in t
  VectorXd lambda0;       // eigenvalues at t = 0 (last is 0)
};

inline KernelCurveSample sample_kernel_family(int d, int deg, unsigned seed,
                                              double amp = 0.5,
                                              bool rotate_block = true) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int ord = deg;

  const Series tvar = Series::variable(ord, 0.0);
  auto rand_poly = [&](double c0) {
    Series s(ord, c0);
    for (int k = 1; k <= deg; ++k) s = s + amp * u(rng) * powi(tvar, k);
    return s;
  };

  // Raw direction with nonzero value at 0, then orthonormal completion by
  // Gram-Schmidt against shifted constant seeds.
  std::vector<Series> raw;
  for (int i = 0; i < d; ++i)
    raw.push_back(rand_poly(i == 0 ? 1.0 : u(rng) * 0.5));

  auto dot = [&](const std::vector<Series>& a, const std::vector<Series>& b) {
    Series acc = a[0] * b[0];
    for (int i = 1; i < d; ++i) acc = acc + a[i] * b[i];
    return acc;
  };
  auto scale = [&](const std::vector<Series>& a, const Series& s) {
    std::vector<Series> out = a;
    for (auto& c : out) c = c * s;
    return out;
  };
  auto axpy = [&](std::vector<Series> a, const std::vector<Series>& b,
                  const Series& s) {
    for (int i = 0; i < d; ++i) a[i] = a[i] - b[i] * s;
    return a;
  };
  auto normalize = [&](std::vector<Series> a) {
    Series inv = 1.0 / sqrt(dot(a, a));
    return scale(a, inv);
  };

  std::vector<std::vector<Series>> cols;
  cols.push_back(normalize(raw));
  for (int c = 1; c < d; ++c) {
    std::vector<Series> v(d, Series(ord));
    for (int i = 0; i < d; ++i)
      v[i] = Series(ord, (i == c) ? 1.0 : 0.12 * c);
    for (const auto& prev : cols) v = axpy(std::move(v), prev, dot(v, prev));
    cols.push_back(normalize(std::move(v)));
  }
  // P = [u_2 .. u_d | u_1]: kernel direction last.
  std::vector<std::vector<Series>> P;
  for (int c = 1; c < d; ++c) P.push_back(cols[c]);
  P.push_back(cols[0]);

  if (rotate_block && d >= 3) {
    // Givens factors with polynomial angles acting on the first d-1 columns.
    for (int a = 0; a + 1 < d - 1; ++a) {
      Series theta = rand_poly(0.3 * u(rng));
      Series cs = cos(theta), sn = sin(theta);
      for (int i = 0; i < d; ++i) {
        Series x = P[a][i], y = P[a + 1][i];
        P[a][i] = x * cs - y * sn;
        P[a + 1][i] = x * sn + y * cs;
      }
    }
  }

  std::vector<Series> lambda;
  VectorXd lambda0(d);
  for (int i = 0; i < d - 1; ++i) {
    lambda.push_back(rand_poly(1.0 + 0.4 * i + 0.2 * amp * u(rng)));
    lambda0[i] = lambda.back()[0];
  }
  lambda0[d - 1] = 0.0;

  // A = sum_i lambda_i u_i u_i^T over the first d-1 columns.
  std::vector<MatrixXd> coeffs(ord + 1, MatrixXd::Zero(d, d));
  for (int c = 0; c < d - 1; ++c) {
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        Series term = lambda[c] * P[c][i] * P[c][j];
        for (int k = 0; k <= ord; ++k) coeffs[k](i, j) += term[k];
      }
  }
  KernelCurveSample s;
  s.A = MatPoly::from_coeffs(std::move(coeffs));
  s.n = P.back();
  s.lambda0 = lambda0;
  return s;
}

struct ScanSummary {
  int total = 0;
  int spanning = 0;
  std::vector<unsigned> failing_seeds;
};

inline ScanSummary genericity_scan(int d, int deg, int samples,
                                   unsigned seed0, int lmax = 5,
                                   double tbar = 0.0) {
  ScanSummary sum;
  sum.total = samples;
  for (int s = 0; s < samples; ++s) {
    unsigned seed = seed0 + static_cast<unsigned>(s);
    KernelCurveSample ks = sample_kernel_family(d, deg, seed);
    BracketFamily fam = bracket_family(ks.A, lmax);
    SpanReport rep = span_test(fam.at(tbar), d);
    if (rep.spans)
      ++sum.spanning;
    else
      sum.failing_seeds.push_back(seed);
  }
  return sum;
}

}  // namespace subrq
