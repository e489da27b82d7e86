#pragma once
// Realization of a prescribed transverse fiber Hessian curve: given normal
// form data and an admissible target curve Atilde(t) (same kernel, same
// value at t = 0), build the quadratic fiber correction
//   K1(q, p) = 1/2 (p + dg)^T B Chat B (p + dg),  Chat = diag(0, C1),
// whose 1-jet vanishes along the orbit while the p-hat Hessian block of the
// corrected system reproduces Atilde.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "subrq/common.hpp"
#include "subrq/normal_form.hpp"

namespace subrq {
namespace variational {

struct RealizedPerturbation {
  std::vector<MatrixXd> C1;  // transverse core along the grid, d x d
  std::vector<MatrixXd> B1;  // full fiber correction along the grid
  double max_c1 = 0;
  double recover_err = 0;  // max || A + [B1]_pp - Atilde ||
  // 1-jet of the correction along the orbit (all should vanish)
  double jet_value = 0;
  double jet_dp = 0;
  double jet_dq = 0;
};

inline RealizedPerturbation realize_perturbation(
    const normal_form::NormalFormData& nf, const std::vector<MatrixXd>& atilde,
    double null_tol = 1e-6) {
  const int G = static_cast<int>(nf.grid.size());
  const int d = nf.d;
  const int n = d + 1;
  if (static_cast<int>(atilde.size()) != G)
    throw DomainError("realize_perturbation: target curve grid mismatch");
  for (const auto& m : atilde)
    if (m.rows() != d || m.cols() != d ||
        (m - m.transpose()).norm() > 1e-9 * std::max(1.0, m.norm()))
      throw DomainError("realize_perturbation: target must be symmetric d x d");
  if ((atilde[0] - nf.A[0]).norm() > null_tol)
    throw DomainError(
        "realize_perturbation: target must agree with the normalized Hessian "
        "at the base point");
  for (int i = 0; i < G; ++i) {
    double scale = 1.0 + atilde[i].norm() + nf.A[i].norm();
    if (((atilde[i] - nf.A[i]) * nf.n[i]).norm() > null_tol * scale)
      throw DomainError(
          "realize_perturbation: target must annihilate the kernel direction");
  }

  const MatrixXd M = nf.M;
  const MatrixXd Minv = M.partialPivLu().inverse();
  const Hamiltonian& H = *nf.chars.H;

  RealizedPerturbation out;
  out.C1.resize(G);
  out.B1.resize(G);

  for (int i = 0; i < G; ++i) {
    MatrixXd gbar = normal_form::detail::complement_basis(nf.n[i]);
    MatrixXd cbar = gbar.transpose() * nf.A[i] * gbar;
    if (d >= 2) {
      Eigen::JacobiSVD<MatrixXd> svd(cbar);
      VectorXd sv = svd.singularValues();
      if (!(sv.minCoeff() > 1e-8 * std::max(1.0, sv.maxCoeff())))
        throw NumericError("realize_perturbation: transverse core is singular");
    }
    MatrixXd cinv = cbar.inverse();
    MatrixXd rbar = gbar.transpose() * (atilde[i] - nf.A[i]) * gbar;
    MatrixXd c1 = gbar * cinv * rbar * cinv * gbar.transpose();
    MatrixXd chat = MatrixXd::Zero(n, n);
    chat.bottomRightCorner(d, d) = c1;
    out.C1[i] = c1;
    out.B1[i] = nf.B[i] * chat * nf.B[i];
    out.max_c1 = std::max(out.max_c1, c1.norm());
    double rec =
        (nf.A[i] + out.B1[i].bottomRightCorner(d, d) - atilde[i]).norm();
    out.recover_err = std::max(out.recover_err, rec);
  }

  // 1-jet of K1 along the orbit: the value and fiber derivative vanish to
  // rounding because Chat annihilates B dg = e1; the base derivative needs
  // the directional derivatives of B and dg carried by the variation jets.
  VectorXd e1 = VectorXd::Zero(n);
  e1[0] = 1.0;
  for (int i = 0; i < G; ++i) {
    const VectorXd& w = nf.dg[i];
    MatrixXd chat = MatrixXd::Zero(n, n);
    chat.bottomRightCorner(d, d) = out.C1[i];
    VectorXd bw = nf.B[i] * w;
    out.jet_value = std::max(out.jet_value, std::abs(0.5 * bw.dot(chat * bw)));
    out.jet_dp = std::max(out.jet_dp, (nf.B[i] * (chat * bw)).norm());

    // Directional data in the pre-scaling chart.
    normal_form::CharPoint cp = nf.chars.at(nf.grid[i]);
    normal_form::detail::CharDerivs der =
        normal_form::detail::char_derivs(H, cp);
    MatrixXd dchi(n, n);
    dchi.col(0) = der.zdot.head(n);
    dchi.rightCols(d) = cp.V.topRows(n);
    MatrixXd dchi_inv = dchi.partialPivLu().inverse();
    MatrixXd hpp = der.jet.hess.bottomRightCorner(n, n);
    MatrixXd b_pre = dchi_inv * hpp * dchi_inv.transpose();

    auto pairs = sym_index_pairs(d);
    std::vector<MatrixXd> dB(n);   // pre-chart directional derivatives
    std::vector<VectorXd> dG(n);
    for (int a = 0; a < n; ++a) {
      MatrixXd da(n, d + 1);
      MatrixXd dhpp;
      VectorXd dp_dir;
      if (a == 0) {
        VectorXd zdd = normal_form::detail::apply_J(der.jet.hess * der.zdot, n);
        da.col(0) = zdd.head(n);
        da.rightCols(d) = der.Vdot.topRows(n);
        dhpp = der.jet.third.contract_first(der.zdot).bottomRightCorner(n, n);
        dp_dir = der.zdot.tail(n);
      } else {
        int j = a - 1;
        da.col(0) = der.Vdot.col(j).head(n);
        for (int k = 0; k < d; ++k) {
          int lo = std::min(j, k), hi = std::max(j, k);
          int m = 0;
          for (; m < static_cast<int>(pairs.size()); ++m)
            if (pairs[m].first == lo && pairs[m].second == hi) break;
          da.col(1 + k) = cp.S.col(m).head(n);
        }
        dhpp = der.jet.third.contract_first(cp.V.col(j)).bottomRightCorner(n, n);
        dp_dir = cp.V.col(j).tail(n);
      }
      MatrixXd xa = dchi_inv * da;
      dB[a] = -xa * b_pre + dchi_inv * dhpp * dchi_inv.transpose() -
              b_pre * xa.transpose();
      dG[a] = da.transpose() * cp.p + dchi.transpose() * dp_dir;
    }

    // Time derivative of the core by grid differences.
    MatrixXd c1dot;
    if (i == 0)
      c1dot = (out.C1[1] - out.C1[0]) / (nf.grid[1] - nf.grid[0]);
    else if (i == G - 1)
      c1dot = (out.C1[G - 1] - out.C1[G - 2]) /
              (nf.grid[G - 1] - nf.grid[G - 2]);
    else
      c1dot = (out.C1[i + 1] - out.C1[i - 1]) /
              (nf.grid[i + 1] - nf.grid[i - 1]);
    MatrixXd dchat = MatrixXd::Zero(n, n);
    dchat.bottomRightCorner(d, d) = c1dot;

    for (int b = 0; b < n; ++b) {
      MatrixXd dBb = MatrixXd::Zero(n, n);
      VectorXd dGb = VectorXd::Zero(n);
      for (int a = 0; a < n; ++a) {
        if (Minv(a, b) == 0.0) continue;
        dBb += Minv(a, b) * (M * dB[a] * M.transpose());
        dGb += Minv(a, b) * (Minv.transpose() * dG[a]);
      }
      double term = dGb.dot(nf.B[i] * (chat * bw)) + bw.dot(chat * (dBb * w));
      if (b == 0) term += 0.5 * bw.dot(dchat * bw);
      out.jet_dq = std::max(out.jet_dq, std::abs(term));
    }
  }
  return out;
}

}  // namespace variational
}  // namespace subrq
