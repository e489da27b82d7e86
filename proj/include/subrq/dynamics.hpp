#pragma once

#include <limits>
#include <optional>
#include <random>

#include "subrq/geometry.hpp"
#include "subrq/taylor.hpp"

namespace subrq {

// Fiberwise-quadratic Hamiltonian H(q, p) = 1/2 m(q) p^T B(q) p + U(q),
// with B either F g^{-1} F^T over a frame (so H is constant along p + span
// of the annihilator) or an explicit symmetric matrix of expressions. The
// scalar multiplier m(q) carries reparametrized kinetic parts.
class Hamiltonian {
 public:
  enum class Kind { kQuadratic, kReversible };

  static Hamiltonian from_frame(const Frame& fr,
                                std::vector<std::vector<Expr>> metric,
                                Expr potential,
                                Kind kind = Kind::kQuadratic) {
    Hamiltonian h(fr.ambient_dim(), std::move(potential), kind);
    h.frame_fields_ = fr.fields();
    h.metric_ = std::move(metric);
    int d = fr.rank();
    if (static_cast<int>(h.metric_.size()) != d)
      throw DomainError("metric must be d x d over the frame");
    for (const auto& row : h.metric_)
      if (static_cast<int>(row.size()) != d)
        throw DomainError("metric must be d x d over the frame");
    return h;
  }

  static Hamiltonian from_matrix(int ambient_dim,
                                 std::vector<std::vector<Expr>> B,
                                 Expr potential,
                                 Kind kind = Kind::kQuadratic) {
    Hamiltonian h(ambient_dim, std::move(potential), kind);
    h.bmat_ = std::move(B);
    if (static_cast<int>(h.bmat_.size()) != ambient_dim)
      throw DomainError("kinetic matrix must be n x n");
    for (const auto& row : h.bmat_)
      if (static_cast<int>(row.size()) != ambient_dim)
        throw DomainError("kinetic matrix must be n x n");
    return h;
  }

  int dim() const { return n_; }
  Kind kind() const { return kind_; }
  const Expr& potential() const { return potential_; }
  bool has_multiplier() const { return multiplier_.has_value(); }

  template <class S>
  S eval_phase(const std::vector<S>& q, const std::vector<S>& p) const {
    S kin = kinetic_phase(q, p);
    if (multiplier_) kin = kin * multiplier_->eval_with(q);
    return kin + potential_.eval_with(q);
  }

  double value(const VectorXd& q, const VectorXd& p) const {
    std::vector<double> qs(q.data(), q.data() + n_);
    std::vector<double> ps(p.data(), p.data() + n_);
    return eval_phase(qs, ps);
  }

  double potential_at(const VectorXd& q) const { return potential_.eval(q); }

  // Jet of H in the 2n phase variables (q first, then p).
  JetValue phase_jet(const VectorXd& q, const VectorXd& p, int order) const {
    std::vector<TaylorN> qs, ps;
    for (int i = 0; i < n_; ++i)
      qs.push_back(TaylorN::variable(2 * n_, order, i, q[i]));
    for (int i = 0; i < n_; ++i)
      ps.push_back(TaylorN::variable(2 * n_, order, n_ + i, p[i]));
    TaylorN h = eval_phase(qs, ps);
    JetValue out;
    out.order = order;
    out.value = h.value();
    if (order >= 1) out.grad = h.grad();
    if (order >= 2) out.hess = h.hess();
    if (order >= 3) out.third = h.third();
    return out;
  }

  // Effective kinetic matrix (multiplier included): Hess_p H at p = 0,
  // by exact polarization of the quadratic fiber dependence.
  MatrixXd kinetic_matrix(const VectorXd& q) const {
    std::vector<double> qs(q.data(), q.data() + n_);
    std::vector<double> zero(n_, 0.0);
    double h0 = eval_phase(qs, zero);
    MatrixXd B(n_, n_);
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j <= i; ++j) {
        std::vector<double> ei(n_, 0.0), ej(n_, 0.0), sum(n_, 0.0);
        ei[i] = 1.0;
        ej[j] = 1.0;
        sum[i] += 1.0;
        sum[j] += 1.0;
        double hij =
            eval_phase(qs, sum) - eval_phase(qs, ei) - eval_phase(qs, ej) + h0;
        B(i, j) = B(j, i) = hij;
      }
    }
    return B;
  }

  // Kinetic part rescaled to 1/(level - U); the new shell level is 1.
  Hamiltonian maupertuis(double level) const {
    Hamiltonian h = *this;
    Expr denom = Expr::constant(level, n_) - potential_;
    h.multiplier_ = multiplier_ ? (*multiplier_ / denom)
                                : (Expr::constant(1.0, n_) / denom);
    h.potential_ = Expr::constant(0.0, n_);
    return h;
  }

  // H(q, p + s w) == H(q, p) for w in the kernel direction.
  bool fiber_invariance_check(const std::function<VectorXd(const VectorXd&)>& w,
                              const std::vector<VectorXd>& samples,
                              double tol = 1e-10) const {
    std::mt19937 rng(2026);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (const auto& q : samples) {
      VectorXd p(n_);
      for (int i = 0; i < n_; ++i) p[i] = u(rng);
      double base = value(q, p);
      for (double s : {-1.7, 0.4, 2.3}) {
        double shifted = value(q, VectorXd(p + s * w(q)));
        if (std::abs(shifted - base) > tol * (1.0 + std::abs(base)))
          return false;
      }
    }
    return true;
  }

  bool reversibility_check(const std::vector<VectorXd>& samples,
                           double tol = 1e-12) const {
    std::mt19937 rng(2027);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (const auto& q : samples) {
      VectorXd p(n_);
      for (int i = 0; i < n_; ++i) p[i] = u(rng);
      double a = value(q, p), b = value(q, VectorXd(-p));
      if (std::abs(a - b) > tol * (1.0 + std::abs(a))) return false;
    }
    return true;
  }

 private:
  Hamiltonian(int n, Expr potential, Kind kind)
      : n_(n), potential_(std::move(potential)), kind_(kind) {}

  template <class S>
  S kinetic_phase(const std::vector<S>& q, const std::vector<S>& p) const {
    if (!bmat_.empty()) {
      S acc = p[0] * 0.0;
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j)
          acc = acc + p[i] * bmat_[i][j].eval_with(q) * p[j];
      return acc * 0.5;
    }
    const int d = static_cast<int>(frame_fields_.size());
    // w_i = p . f^i(q); K = 1/2 w^T g^{-1} w.
    std::vector<S> w;
    w.reserve(d);
    for (int i = 0; i < d; ++i) {
      S acc = p[0] * 0.0;
      for (int a = 0; a < n_; ++a)
        acc = acc + p[a] * frame_fields_[i][a].eval_with(q);
      w.push_back(acc);
    }
    SmallMat<S> g(d, d, p[0] * 0.0);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) g(i, j) = metric_[i][j].eval_with(q);
    SmallMat<S> ginv = g.inverse();
    S acc = p[0] * 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) acc = acc + w[i] * ginv(i, j) * w[j];
    return acc * 0.5;
  }

  int n_;
  Expr potential_;
  Kind kind_;
  std::optional<Expr> multiplier_;
  std::vector<std::vector<Expr>> frame_fields_;  // frame form
  std::vector<std::vector<Expr>> metric_;
  std::vector<std::vector<Expr>> bmat_;  // explicit form
};

struct PhaseOrbit {
  DenseSolution z;
  int n = 0;
  double T = 0;
  double level = 0;
  double energy_drift = 0;  // max |H - level| over nodes

  VectorXd q_at(double t) const { return z.eval(t).head(n); }
  VectorXd p_at(double t) const { return z.eval(t).tail(n); }
  VectorXd q0() const { return z.node_states().front().head(n); }
  VectorXd p0() const { return z.node_states().front().tail(n); }
};

// Hamilton's equations qdot = H_p, pdot = -H_q; aborts when the energy
// drifts beyond gate * (1 + |level|) at any accepted node.
inline PhaseOrbit hamiltonian_flow(const Hamiltonian& H, const VectorXd& q0,
                                   const VectorXd& p0, double T,
                                   OdeOptions opt = {},
                                   double drift_gate = 1e-9) {
  const int n = H.dim();
  auto rhs = [&H, n](double, const VectorXd& z) -> VectorXd {
    JetValue j = H.phase_jet(z.head(n), z.tail(n), 1);
    VectorXd out(2 * n);
    out.head(n) = j.grad.tail(n);
    out.tail(n) = -j.grad.head(n);
    return out;
  };
  VectorXd z0(2 * n);
  z0 << q0, p0;
  PhaseOrbit orb;
  orb.n = n;
  orb.T = T;
  orb.level = H.value(q0, p0);
  orb.z = ode_integrate(rhs, 0.0, T, z0, opt);
  for (const auto& z : orb.z.node_states()) {
    double e = std::abs(H.value(z.head(n), z.tail(n)) - orb.level);
    orb.energy_drift = std::max(orb.energy_drift, e);
  }
  if (orb.energy_drift > drift_gate * (1.0 + std::abs(orb.level)))
    throw NumericError("energy drift " + std::to_string(orb.energy_drift) +
                       " exceeds gate");
  return orb;
}

// Scales the fiber variable so that H(q0, s p0) = level; requires positive
// kinetic energy at (q0, p0) and level > U(q0).
inline VectorXd project_to_shell(const Hamiltonian& H, const VectorXd& q0,
                                 const VectorXd& p0, double level) {
  double u = H.value(q0, VectorXd::Zero(H.dim()));
  double kin = H.value(q0, p0) - u;
  if (kin <= 0) throw DomainError("nonpositive kinetic energy at base point");
  if (level <= u)
    throw DomainError("shell level does not dominate the potential");
  return std::sqrt((level - u) / kin) * p0;
}

struct SupercriticalReport {
  bool supercritical = false;
  double margin = 0;  // min over samples of level - U(Q(t))
};

inline SupercriticalReport supercritical_margin(const Hamiltonian& H,
                                                const PhaseOrbit& orbit,
                                                double level,
                                                int nsamples = 256) {
  SupercriticalReport rep;
  rep.margin = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= nsamples; ++k) {
    double t = orbit.T * k / nsamples;
    VectorXd q = orbit.q_at(t);
    rep.margin =
        std::min(rep.margin, level - H.value(q, VectorXd::Zero(H.dim())));
  }
  rep.supercritical = rep.margin > 0;
  return rep;
}

// Fiber covector generating the given controls: the minimum-norm p with
// F(q)^T p = g(q) c.
inline VectorXd legendre_dual_quadratic(const Frame& fr, const MatrixXd& g,
                                        const VectorXd& q, const VectorXd& c) {
  MatrixXd F = fr.frame_matrix(q);
  return F * (F.transpose() * F).ldlt().solve(g * c);
}

struct NeatTimes {
  std::vector<double> times;  // instants with Q(t) = Q(0), t = 0 included
  double tol = 0;             // absolute distance threshold used
};

// Finds base-point return times of the configuration projection: local
// minimizers of |Q(t) - Q(0)| below rel_tol * diameter, separated by at
// least sep_factor * (largest accepted step).
inline NeatTimes annotate_neat_times(const PhaseOrbit& orbit,
                                     double rel_tol = 1e-6,
                                     double sep_factor = 10.0) {
  const int n = orbit.n;
  VectorXd base = orbit.q0();
  double diam = 0;
  for (const auto& z : orbit.z.node_states())
    diam = std::max(diam, (z.head(n) - base).norm());
  NeatTimes out;
  out.tol = rel_tol * std::max(diam, 1e-300);
  double sep = sep_factor * orbit.z.max_step();
  auto dist = [&](double t) { return (orbit.q_at(t) - base).norm(); };

  int m = std::max<int>(512, 8 * static_cast<int>(orbit.z.node_times().size()));
  std::vector<double> d(m + 1);
  for (int k = 0; k <= m; ++k) d[k] = dist(orbit.T * k / m);

  out.times.push_back(0.0);
  double last = 0.0;
  for (int k = 1; k < m; ++k) {
    if (!(d[k] <= d[k - 1] && d[k] <= d[k + 1])) continue;
    double a = orbit.T * (k - 1) / m, b = orbit.T * (k + 1) / m;
    for (int it = 0; it < 200 && b - a > 1e-15 * orbit.T; ++it) {
      double l = a + (b - a) / 3, r = b - (b - a) / 3;
      if (dist(l) < dist(r))
        b = r;
      else
        a = l;
    }
    double tm = 0.5 * (a + b);
    if (dist(tm) <= out.tol && tm - last >= sep) {
      out.times.push_back(tm);
      last = tm;
    }
  }
  return out;
}

struct Monodromy {
  MatrixXd X;               // transition of the linearized flow over [0, T]
  double symplectic_defect; // |X^T J X - J|
};

inline Monodromy monodromy_matrix(const Hamiltonian& H, const VectorXd& q0,
                                  const VectorXd& p0, double T,
                                  OdeOptions opt = {}) {
  const int n = H.dim();
  const MatrixXd J = symplectic_J(n);
  auto rhs = [&](double, const VectorXd& s) -> VectorXd {
    VectorXd z = s.head(2 * n);
    JetValue j = H.phase_jet(z.head(n), z.tail(n), 2);
    MatrixXd X = Eigen::Map<const MatrixXd>(s.data() + 2 * n, 2 * n, 2 * n);
    VectorXd out(2 * n + 4 * n * n);
    out.head(n) = j.grad.tail(n);
    out.segment(n, n) = -j.grad.head(n);
    Eigen::Map<MatrixXd>(out.data() + 2 * n, 2 * n, 2 * n) = J * j.hess * X;
    return out;
  };
  VectorXd s0 = VectorXd::Zero(2 * n + 4 * n * n);
  s0.head(n) = q0;
  s0.segment(n, n) = p0;
  Eigen::Map<MatrixXd>(s0.data() + 2 * n, 2 * n, 2 * n) =
      MatrixXd::Identity(2 * n, 2 * n);
  DenseSolution sol = ode_integrate(rhs, 0.0, T, s0, opt);
  Monodromy mon;
  mon.X = Eigen::Map<const MatrixXd>(sol.node_states().back().data() + 2 * n,
                                     2 * n, 2 * n);
  mon.symplectic_defect = (mon.X.transpose() * J * mon.X - J).norm();
  return mon;
}

}  // namespace subrq
