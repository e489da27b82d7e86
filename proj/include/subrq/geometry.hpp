#pragma once

#include "subrq/expr.hpp"
#include "subrq/ode.hpp"

namespace subrq {

// Co-rank-1 distribution on an n-dimensional chart: a frame of d = n-1
// vector fields spanning it and a one-form annihilating it.
class Frame {
 public:
  Frame(int ambient_dim, std::vector<std::vector<Expr>> fields,
        std::vector<Expr> eta)
      : n_(ambient_dim), fields_(std::move(fields)), eta_(std::move(eta)) {
    if (static_cast<int>(fields_.size()) != n_ - 1)
      throw DomainError("frame must have ambient_dim-1 fields");
    for (const auto& f : fields_)
      if (static_cast<int>(f.size()) != n_)
        throw DomainError("frame field has wrong number of components");
    if (static_cast<int>(eta_.size()) != n_)
      throw DomainError("annihilator has wrong number of components");
  }

  int ambient_dim() const { return n_; }
  int rank() const { return n_ - 1; }
  const std::vector<std::vector<Expr>>& fields() const { return fields_; }
  const std::vector<Expr>& eta() const { return eta_; }

  // Columns f^1(q) .. f^d(q).
  MatrixXd frame_matrix(const VectorXd& q) const {
    MatrixXd F(n_, rank());
    for (int i = 0; i < rank(); ++i)
      for (int a = 0; a < n_; ++a) F(a, i) = fields_[i][a].eval(q);
    return F;
  }

  // (Df^i)_{ab} = d f^i_a / d q_b.
  MatrixXd field_jacobian(int i, const VectorXd& q) const {
    MatrixXd J(n_, n_);
    for (int a = 0; a < n_; ++a) J.row(a) = fields_[i][a].eval_jet(q, 1).grad;
    return J;
  }

  VectorXd eta_value(const VectorXd& q) const {
    VectorXd e(n_);
    for (int a = 0; a < n_; ++a) e[a] = eta_[a].eval(q);
    return e;
  }

  // W_{jk} = d eta_k / d q_j - d eta_j / d q_k, so that
  // (d eta)(u, v) = u^T W v.
  MatrixXd eta_exterior(const VectorXd& q) const {
    MatrixXd J(n_, n_);
    for (int k = 0; k < n_; ++k) J.col(k) = eta_[k].eval_jet(q, 1).grad;
    return J - J.transpose();
  }

  // Checks at each sample point: eta annihilates the frame, the frame has
  // full rank d, and eta does not vanish.
  void validate(const std::vector<VectorXd>& samples,
                double tol = 1e-10) const {
    for (const auto& q : samples) {
      MatrixXd F = frame_matrix(q);
      VectorXd e = eta_value(q);
      double escale = e.norm();
      if (escale < tol)
        throw DomainError("annihilator vanishes at a sample point");
      for (int i = 0; i < rank(); ++i) {
        double pairing = std::abs(e.dot(F.col(i)));
        double scale = escale * F.col(i).norm();
        if (pairing > tol * (1.0 + scale))
          throw DomainError("one-form does not annihilate frame field " +
                            std::to_string(i + 1) + " (pairing " +
                            std::to_string(pairing) + ")");
      }
      Eigen::JacobiSVD<MatrixXd> svd(F);
      if (svd.singularValues()[rank() - 1] <=
          tol * std::max(1.0, svd.singularValues()[0]))
        throw DomainError("frame fields are linearly dependent at a sample");
    }
  }

 private:
  int n_;
  std::vector<std::vector<Expr>> fields_;
  std::vector<Expr> eta_;
};

struct ControlCurve {
  std::function<VectorXd(double)> c;
  double T;
};

struct HorizontalCurve {
  DenseSolution q;
  std::function<VectorXd(double)> control;
  double T;

  VectorXd position(double t) const { return q.eval(t); }
  VectorXd endpoint() const { return q.node_states().back(); }
};

// Integrates Qdot = sum_i c_i(t) f^i(Q).
inline HorizontalCurve integrate_horizontal(const Frame& fr,
                                            const VectorXd& q0,
                                            const ControlCurve& ctrl,
                                            OdeOptions opt = {}) {
  auto rhs = [&fr, &ctrl](double t, const VectorXd& q) -> VectorXd {
    return fr.frame_matrix(q) * ctrl.c(t);
  };
  HorizontalCurve hc;
  hc.q = ode_integrate(rhs, 0.0, ctrl.T, q0, opt);
  hc.control = ctrl.c;
  hc.T = ctrl.T;
  return hc;
}

// r_i = (d eta)(Qdot, f^i(q)) with Qdot = F(q) c; the curve is regular at a
// time iff r != 0 there.
inline VectorXd regularity_form(const Frame& fr, const VectorXd& q,
                                const VectorXd& c) {
  MatrixXd F = fr.frame_matrix(q);
  MatrixXd W = fr.eta_exterior(q);
  VectorXd qdot = F * c;
  return F.transpose() * W.transpose() * qdot;  // r_i = qdot^T W f^i
}

struct RegularityReport {
  std::vector<double> times;
  std::vector<double> values;  // ||r(t)|| / scale(t)
  std::vector<bool> regular;
  bool any_regular = false;
  bool all_regular = true;
  double first_regular_time = -1.0;
};

inline RegularityReport regularity_scan(const Frame& fr,
                                        const HorizontalCurve& curve,
                                        int nsamples, double tol = 1e-9) {
  RegularityReport rep;
  for (int k = 0; k <= nsamples; ++k) {
    double t = curve.T * k / nsamples;
    VectorXd q = curve.position(t);
    VectorXd c = curve.control(t);
    MatrixXd F = fr.frame_matrix(q);
    MatrixXd W = fr.eta_exterior(q);
    VectorXd qdot = F * c;
    VectorXd r = F.transpose() * W.transpose() * qdot;
    double scale =
        qdot.norm() * W.norm() * F.colwise().norm().maxCoeff();
    double v = scale > 0 ? r.norm() / scale : 0.0;
    bool reg = v > tol;
    rep.times.push_back(t);
    rep.values.push_back(v);
    rep.regular.push_back(reg);
    rep.any_regular = rep.any_regular || reg;
    rep.all_regular = rep.all_regular && reg;
    if (reg && rep.first_regular_time < 0) rep.first_regular_time = t;
  }
  return rep;
}

struct EndpointDifferential {
  MatrixXd columns;    // n x m over the variation basis
  int rank = 0;
  double smin_rel = 0; // sigma_n / sigma_1 (0 when rank-deficient)
  int level = 0;       // dyadic refinement level used
};

namespace detail {
// 5-point Gauss-Legendre nodes/weights on [-1, 1].
inline const double kGauss5X[5] = {-0.906179845938663992797626878299,
                                   -0.538469310105683091036314420700, 0.0,
                                   0.538469310105683091036314420700,
                                   0.906179845938663992797626878299};
inline const double kGauss5W[5] = {0.236926885056189087514264040720,
                                   0.478628670499366468041291514836,
                                   0.568888888888888888888888888889,
                                   0.478628670499366468041291514836,
                                   0.236926885056189087514264040720};

inline double legendre3(int deg, double u) {  // on [0, 1]
  double x = 2.0 * u - 1.0;
  switch (deg) {
    case 0: return 1.0;
    case 1: return x;
    case 2: return 0.5 * (3.0 * x * x - 1.0);
    default: return 0.5 * (5.0 * x * x * x - 3.0 * x);
  }
}
}  // namespace detail

// Derivative of the endpoint map over piecewise-cubic control variations on
// a dyadic grid, via the variational transition: column for basis element
// (i, cell, deg) is  int M(T) M(s)^{-1} f^i(Q(s)) phi(s) ds.  The level is
// refined until the rank stops changing.
inline EndpointDifferential endpoint_differential(const Frame& fr,
                                                  const HorizontalCurve& curve,
                                                  int min_level = 2,
                                                  int max_level = 6,
                                                  double svd_rel_tol = 1e-8) {
  const int n = fr.ambient_dim();
  const int d = fr.rank();
  const double T = curve.T;
  if (T <= 0) throw DomainError("endpoint differential needs positive length");

  // Augmented flow for (Q, M): Mdot = (sum_i c_i Df^i(Q)) M.
  auto rhs = [&](double t, const VectorXd& ym) -> VectorXd {
    VectorXd q = ym.head(n);
    VectorXd c = curve.control(t);
    MatrixXd M = Eigen::Map<const MatrixXd>(ym.data() + n, n, n);
    MatrixXd A = MatrixXd::Zero(n, n);
    for (int i = 0; i < d; ++i) A += c[i] * fr.field_jacobian(i, q);
    VectorXd out(n + n * n);
    out.head(n) = fr.frame_matrix(q) * c;
    Eigen::Map<MatrixXd>(out.data() + n, n, n) = A * M;
    return out;
  };
  VectorXd ym0(n + n * n);
  ym0.head(n) = curve.position(0.0);
  Eigen::Map<MatrixXd>(ym0.data() + n, n, n) = MatrixXd::Identity(n, n);
  DenseSolution aug = ode_integrate(rhs, 0.0, T, ym0);
  VectorXd ymT = aug.node_states().back();
  MatrixXd MT = Eigen::Map<const MatrixXd>(ymT.data() + n, n, n);

  auto propagated = [&](double s) -> MatrixXd {
    VectorXd ym = aug.eval(s);
    VectorXd q = ym.head(n);
    MatrixXd Ms = Eigen::Map<const MatrixXd>(ym.data() + n, n, n);
    return MT * Ms.partialPivLu().solve(fr.frame_matrix(q));  // n x d
  };

  EndpointDifferential best;
  int prev_rank = -1;
  for (int level = min_level; level <= max_level; ++level) {
    int cells = 1 << level;
    MatrixXd cols(n, d * cells * 4);
    int col = 0;
    for (int cell = 0; cell < cells; ++cell) {
      double a = T * cell / cells, b = T * (cell + 1) / cells;
      MatrixXd acc[4];
      for (int deg = 0; deg < 4; ++deg) acc[deg] = MatrixXd::Zero(n, d);
      for (int g = 0; g < 5; ++g) {
        double s = 0.5 * (a + b) + 0.5 * (b - a) * detail::kGauss5X[g];
        double w = 0.5 * (b - a) * detail::kGauss5W[g];
        MatrixXd P = propagated(s);
        double u = (s - a) / (b - a);
        for (int deg = 0; deg < 4; ++deg)
          acc[deg] += w * detail::legendre3(deg, u) * P;
      }
      for (int deg = 0; deg < 4; ++deg)
        for (int i = 0; i < d; ++i) cols.col(col++) = acc[deg].col(i);
    }
    Eigen::JacobiSVD<MatrixXd> svd(cols);
    VectorXd sv = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
      if (sv[i] > svd_rel_tol * sv[0]) ++rank;
    best.columns = cols;
    best.rank = rank;
    best.smin_rel = rank == n ? sv[n - 1] / sv[0] : 0.0;
    best.level = level;
    if (rank == prev_rank) break;
    prev_rank = rank;
  }
  return best;
}

// Directional derivative of the endpoint map along a control variation dc:
// integrates u' = M(s)^{-1} F(Q(s)) dc(s) alongside (Q, M) and returns
// M(T) u(T).
inline VectorXd endpoint_directional_derivative(
    const Frame& fr, const HorizontalCurve& curve,
    const std::function<VectorXd(double)>& dc) {
  const int n = fr.ambient_dim();
  const int d = fr.rank();
  auto rhs = [&](double t, const VectorXd& s) -> VectorXd {
    VectorXd q = s.head(n);
    VectorXd c = curve.control(t);
    MatrixXd M = Eigen::Map<const MatrixXd>(s.data() + n, n, n);
    MatrixXd A = MatrixXd::Zero(n, n);
    for (int i = 0; i < d; ++i) A += c[i] * fr.field_jacobian(i, q);
    VectorXd out(n + n * n + n);
    out.head(n) = fr.frame_matrix(q) * c;
    Eigen::Map<MatrixXd>(out.data() + n, n, n) = A * M;
    out.tail(n) = M.partialPivLu().solve(fr.frame_matrix(q) * dc(t));
    return out;
  };
  VectorXd s0 = VectorXd::Zero(n + n * n + n);
  s0.head(n) = curve.position(0.0);
  Eigen::Map<MatrixXd>(s0.data() + n, n, n) = MatrixXd::Identity(n, n);
  DenseSolution aug = ode_integrate(rhs, 0.0, curve.T, s0);
  VectorXd sT = aug.node_states().back();
  MatrixXd MT = Eigen::Map<const MatrixXd>(sT.data() + n, n, n);
  return MT * sT.tail(n);
}

struct CurveClassification {
  RegularityReport scan;
  int endpoint_rank = 0;
  bool regular = false;        // some sampled time is regular
  bool endpoint_surjective = false;
  bool consistent = false;     // the two characterizations agree
};

inline CurveClassification classify_curve(const Frame& fr,
                                          const HorizontalCurve& curve,
                                          int nsamples = 256,
                                          double tol = 1e-9) {
  CurveClassification cls;
  cls.scan = regularity_scan(fr, curve, nsamples, tol);
  cls.regular = cls.scan.any_regular;
  EndpointDifferential de = endpoint_differential(fr, curve);
  cls.endpoint_rank = de.rank;
  cls.endpoint_surjective = de.rank == fr.ambient_dim();
  cls.consistent = cls.regular == cls.endpoint_surjective;
  return cls;
}

}  // namespace subrq
