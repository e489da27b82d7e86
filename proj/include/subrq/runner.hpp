#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "subrq/common.hpp"
#include "subrq/dynamics.hpp"
#include "subrq/formulas.hpp"
#include "subrq/geometry.hpp"
#include "subrq/lifts.hpp"
#include "subrq/mane.hpp"
#include "subrq/normal_form.hpp"
#include "subrq/scenario.hpp"
#include "subrq/variational.hpp"

// Executes scenario task lists and builds versioned reports.  Everything a
// report contains is a function of (scenario text, seed), so two runs of the
// same file produce identical bytes apart from the timestamp field.

namespace subrq {
namespace runner {

using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Closed-form battery: every identity checked against literal matrix
// arithmetic, independent of the closed-form code paths.

struct BatteryRow {
  std::string name;
  double err = 0.0;
  double tol = 0.0;
  bool pass() const { return err <= tol; }
};

namespace detail {

struct BatteryParams {
  VectorXd mu, v, w;
};

// Separated |mu_i| keep clear of the mu_i = +-mu_j poles; v stays away from 0.
inline BatteryParams battery_params(int d, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  BatteryParams p;
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

}  // namespace detail

inline std::vector<BatteryRow> formula_battery(int d, unsigned seed = 2026) {
  if (d < 2) throw DomainError("formula_battery: d must be >= 2");
  namespace fm = formulas;
  detail::BatteryParams p = detail::battery_params(d, seed + 17 * d);
  const MatrixXd A0 = fm::a0_matrix(d);
  const MatrixXd A1 = fm::a1_matrix(p.mu, p.v);
  const MatrixXd A2 = fm::a2_matrix(p.w);

  BatteryRow xi{"basis xi", 0, 1e-12}, eta{"basis eta", 0, 1e-12},
      zeta{"basis zeta", 0, 1e-12}, gamma{"basis gamma", 0, 1e-12},
      kappa{"basis kappa", 0, 1e-12};
  const auto pairs = sym_index_pairs(d);
  for (const auto& [i, j] : pairs) {
    const fm::FamilyBasis b = fm::family_basis(i, j, p.mu, p.v, p.w);
    const MatrixXd E = sym_entry(d, i, j);
    xi.err = std::max(xi.err, (b.xi - A0 * E).norm());
    eta.err = std::max(eta.err, (b.eta - A1 * E).norm());
    zeta.err = std::max(zeta.err, (b.zeta - A2 * E).norm());
    gamma.err = std::max(gamma.err, (b.gamma - A0 * E * A0).norm());
    kappa.err =
        std::max(kappa.err, (b.kappa - (A1 * E * A0 + A0 * E * A1)).norm());
  }

  // Aggregated sums against naive summation, split into the lemma's three
  // closed-form totals: first-order diagonal part, curvature diagonal part,
  // and the upper-right part.
  const auto cf = fm::corner_free_pairs(d);
  const int np = static_cast<int>(cf.size());
  std::mt19937 rng(seed + 91u * d);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorXd a(np), b(np), c(np);
  for (int k = 0; k < np; ++k) {
    a[k] = u(rng);
    b[k] = u(rng);
    c[k] = u(rng);
  }
  MatrixXd diag_ab = MatrixXd::Zero(d, d), diag_c = MatrixXd::Zero(d, d),
           ur = MatrixXd::Zero(d, d);
  for (int k = 0; k < np; ++k) {
    const auto& [i, j] = cf[k];
    const MatrixXd E = sym_entry(d, i, j);
    diag_ab += a[k] * (A0 * E) + b[k] * (A1 * E);
    diag_c += c[k] * (A2 * E);
    ur += 2.0 * b[k] * (A0 * E * A0) + 3.0 * c[k] * (A1 * E * A0 + A0 * E * A1);
  }
  const VectorXd zero = VectorXd::Zero(np);
  const fm::BlockSums s_ab = fm::aggregate_sums(d, p.mu, p.v, p.w, a, b, zero);
  const fm::BlockSums s_c = fm::aggregate_sums(d, p.mu, p.v, p.w, zero, zero, c);
  const fm::BlockSums s_all = fm::aggregate_sums(d, p.mu, p.v, p.w, a, b, c);
  BatteryRow sum1{"sum first-order", (s_ab.diag_block - diag_ab).norm(),
                  1e-12};
  BatteryRow sum2{"sum curvature", (s_c.diag_block - diag_c).norm(), 1e-12};
  BatteryRow sum3{"sum upper-right", (s_all.upper_right - ur).norm(), 1e-12};

  std::vector<BatteryRow> rows{xi, eta, zeta, gamma, kappa, sum1, sum2, sum3};

  if (d == 2) {
    // det M = 2 w_d - 3 v_1^2; with w_d = v_1^2 this is -v_1^2.
    BatteryRow det{"det identity (d=2)", 0, 1e-12};
    std::mt19937 rng2(seed + 5);
    std::uniform_real_distribution<double> u2(0.2, 1.5);
    for (int k = 0; k < 100; ++k) {
      VectorXd mu(1), v(1), w(2);
      mu << u2(rng2) + 0.5;
      v << (k % 2 ? 1.0 : -1.0) * u2(rng2);
      w << u2(rng2) - 1.0, v[0] * v[0];
      const fm::MMatrix m = fm::m_matrix(mu, v, w);
      const double expected = 2.0 * w[1] - 3.0 * v[0] * v[0];
      det.err = std::max(det.err, std::abs(m.det - expected) /
                                      std::max(1.0, std::abs(expected)));
      det.err = std::max(det.err, std::abs(m.det - (-v[0] * v[0])) /
                                      (v[0] * v[0]));
    }
    rows.push_back(det);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Genericity scan with deterministic per-sample seeding; thread count never
// changes the outcome, only the wall time.

struct ScanStats {
  int d = 0;
  int samples = 0;
  int spanning = 0;
  std::vector<unsigned> failing_seeds;
  std::vector<double> smin;  // smin_rel of each spanning sample, sorted
  double pass_rate() const {
    return samples == 0 ? 1.0 : static_cast<double>(spanning) / samples;
  }
};

inline ScanStats run_scan(int d, int deg, int samples, unsigned seed0,
                          int lmax = 5, double tbar = 0.0, int threads = 1) {
  if (d < 2) throw DomainError("scan: d must be >= 2");
  if (samples < 0) throw DomainError("scan: negative sample count");
  ScanStats st;
  st.d = d;
  st.samples = samples;
  std::vector<char> spans(samples, 0);
  std::vector<double> smin(samples, 0.0);

  auto worker = [&](int lo, int hi) {
    for (int s = lo; s < hi; ++s) {
      const unsigned seed = seed0 + static_cast<unsigned>(s);
      KernelCurveSample ks = sample_kernel_family(d, deg, seed);
      BracketFamily fam = bracket_family(ks.A, lmax);
      SpanReport rep = span_test(fam.at(tbar), d);
      spans[s] = rep.spans ? 1 : 0;
      smin[s] = rep.smin_rel;
    }
  };
  threads = std::max(1, std::min(threads, samples == 0 ? 1 : samples));
  if (threads == 1) {
    worker(0, samples);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (samples + threads - 1) / threads;
    for (int k = 0; k < threads; ++k)
      pool.emplace_back(worker, k * chunk,
                        std::min(samples, (k + 1) * chunk));
    for (auto& t : pool) t.join();
  }
  for (int s = 0; s < samples; ++s) {
    if (spans[s]) {
      ++st.spanning;
      st.smin.push_back(smin[s]);
    } else {
      st.failing_seeds.push_back(seed0 + static_cast<unsigned>(s));
    }
  }
  std::sort(st.smin.begin(), st.smin.end());
  return st;
}

inline ordered_json scan_to_json(const ScanStats& st) {
  ordered_json j;
  j["samples"] = st.samples;
  j["spanning"] = st.spanning;
  j["pass_rate"] = st.pass_rate();
  ordered_json q;
  if (!st.smin.empty()) {
    auto at = [&](double f) {
      return st.smin[static_cast<std::size_t>(f * (st.smin.size() - 1))];
    };
    q["min"] = st.smin.front();
    q["q25"] = at(0.25);
    q["q50"] = at(0.50);
    q["q75"] = at(0.75);
    q["max"] = st.smin.back();
  }
  j["sigma_min_quantiles"] = q;
  j["witnesses"] = st.failing_seeds;
  return j;
}

// ---------------------------------------------------------------------------
// Task execution.

struct TaskReport {
  int index = 0;
  std::string kind;
  bool pass = false;
  std::string verdict;
  std::string note;
  ordered_json metrics;
  // (filename, csv content) pairs written next to the reports
  std::vector<std::pair<std::string, std::string>> artifacts;
};

struct RunReport {
  std::string scenario;
  unsigned seed = 0;
  int threads = 1;
  std::vector<TaskReport> tasks;
  bool pass = true;

  ordered_json to_json() const {
    ordered_json j;
    j["schema"] = "subrq-report/v1";
    j["scenario"] = scenario;
    j["seed"] = seed;
    j["threads"] = threads;
    ordered_json ts = ordered_json::array();
    for (const auto& t : tasks) {
      ordered_json tj;
      tj["index"] = t.index;
      tj["kind"] = t.kind;
      tj["pass"] = t.pass;
      tj["verdict"] = t.verdict;
      if (!t.note.empty()) tj["note"] = t.note;
      tj["metrics"] = t.metrics;
      ordered_json arts = ordered_json::array();
      for (const auto& [name, text] : t.artifacts) {
        (void)text;
        arts.push_back(name);
      }
      if (!arts.empty()) tj["artifacts"] = arts;
      ts.push_back(tj);
    }
    j["tasks"] = ts;
    int passed = 0;
    for (const auto& t : tasks) passed += t.pass ? 1 : 0;
    j["passed"] = passed;
    j["failed"] = static_cast<int>(tasks.size()) - passed;
    j["pass"] = pass;
    return j;
  }

  std::string to_table() const {
    std::ostringstream os;
    os << "scenario: " << scenario << "  (seed " << seed << ")\n";
    os << "  # task            verdict           result\n";
    for (const auto& t : tasks) {
      std::string kind = t.kind;
      kind.resize(15, ' ');
      std::string verdict = t.verdict;
      verdict.resize(17, ' ');
      os << "  " << t.index << " " << kind << " " << verdict << " "
         << (t.pass ? "pass" : "FAIL");
      if (!t.note.empty()) os << "   " << t.note;
      os << "\n";
    }
    os << "overall: " << (pass ? "PASS" : "FAIL") << "\n";
    return os.str();
  }
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

inline VectorXd vec_at(const scenario::ScnNode& t, const std::string& k,
                       int dim) {
  VectorXd v = t.at(k).vec();
  if (v.size() != dim)
    throw DomainError("scenario: '" + k + "' needs " + std::to_string(dim) +
                      " entries at " + t.path);
  return v;
}

inline std::string orbit_csv(const PhaseOrbit& orb, int rows = 257) {
  std::ostringstream os;
  os.precision(17);
  os << "t";
  for (int i = 0; i < orb.n; ++i) os << ",q" << i + 1;
  for (int i = 0; i < orb.n; ++i) os << ",p" << i + 1;
  os << "\n";
  for (int r = 0; r < rows; ++r) {
    double t = orb.T * r / (rows - 1.0);
    VectorXd z = orb.z.eval(t);
    os << t;
    for (int i = 0; i < 2 * orb.n; ++i) os << "," << z[i];
    os << "\n";
  }
  return os.str();
}

inline const Hamiltonian& need_ham(const scenario::Scenario& sc,
                                   const scenario::ScnNode& t) {
  if (!sc.ham)
    throw DomainError("scenario: task at " + t.path + " needs a hamiltonian");
  return *sc.ham;
}

inline const Frame& need_frame(const scenario::Scenario& sc,
                               const scenario::ScnNode& t) {
  if (!sc.frame)
    throw DomainError("scenario: task at " + t.path + " needs a frame");
  return *sc.frame;
}

inline void task_flow(const scenario::Scenario& sc,
                      const scenario::ScnNode& t, TaskReport& rep) {
  const Hamiltonian& H = need_ham(sc, t);
  const VectorXd q0 = vec_at(t, "q0", sc.dim);
  const VectorXd p0 = vec_at(t, "p0", sc.dim);
  const double span = t.at("span").num();
  const double gate = t.num_or("drift-tol", 1e-8);
  PhaseOrbit orb = hamiltonian_flow(H, q0, p0, span, {}, gate);
  rep.metrics["level"] = orb.level;
  rep.metrics["energy_drift"] = orb.energy_drift;
  const VectorXd qT = orb.q_at(span);
  rep.metrics["endpoint_q"] = std::vector<double>(qT.data(), qT.data() + sc.dim);
  rep.artifacts.emplace_back("orbit_" + std::to_string(rep.index) + ".csv",
                             orbit_csv(orb));
  rep.verdict = "ok";
  rep.pass = true;
  rep.note = "drift=" + fmt(orb.energy_drift);
}

inline void task_regularity(const scenario::Scenario& sc,
                            const scenario::ScnNode& t, TaskReport& rep) {
  const Frame& fr = need_frame(sc, t);
  const VectorXd q0 = vec_at(t, "q0", sc.dim);
  const VectorXd c = vec_at(t, "control", sc.dim - 1);
  const double span = t.at("span").num();
  ControlCurve ctrl{[c](double) { return c; }, span};
  HorizontalCurve curve = integrate_horizontal(fr, q0, ctrl);

  CurveClassification cls = classify_curve(fr, curve);
  lifts::AbnormalCovector ab = lifts::abnormal_search(fr, curve);
  double form_max = 0.0;
  for (double v : cls.scan.values) form_max = std::max(form_max, v);

  const bool consistent = cls.consistent && (ab.found == !cls.regular);
  rep.verdict = !consistent ? "inconsistent"
                            : (cls.regular ? "regular" : "singular_curve");
  rep.metrics["form_max"] = form_max;
  rep.metrics["endpoint_rank"] = cls.endpoint_rank;
  rep.metrics["abnormal_found"] = ab.found;
  rep.metrics["abnormal_residual"] = ab.max_residual;

  std::string expect = t.str_or("expect", "");
  if (expect == "singular") expect = "singular_curve";
  rep.pass = consistent && (expect.empty() || rep.verdict == expect);
  rep.note = "form_max=" + fmt(form_max);
}

inline void task_normal_form(const scenario::Scenario& sc,
                             const scenario::ScnNode& t, TaskReport& rep) {
  const Hamiltonian& H = need_ham(sc, t);
  const VectorXd q0 = vec_at(t, "q0", sc.dim);
  const VectorXd p0 = vec_at(t, "p0", sc.dim);
  const double span = t.at("span").num();
  const double delta = t.num_or("delta", span);
  const double res_tol = t.num_or("res-tol", 1e-7);
  const double kernel_tol = t.num_or("kernel-tol", 1e-9);

  PhaseOrbit orb = hamiltonian_flow(H, q0, p0, span);
  normal_form::NormalFormOptions opts;
  opts.seed = sc.seed;
  if (sc.frame) {
    const Frame fr = *sc.frame;
    opts.annihilator = [fr](const VectorXd& q) { return fr.eta_value(q); };
  }
  normal_form::NormalFormData nf = normal_form::normal_form(H, orb, delta, opts);

  double shift_err = 0.0;
  for (std::size_t i = 0; i < nf.B.size(); ++i) {
    VectorXd e1 = VectorXd::Unit(sc.dim, 0);
    shift_err = std::max(shift_err, (nf.B[i] * nf.dg[i] - e1).norm());
  }
  rep.metrics["delta"] = nf.delta;
  rep.metrics["res_orbit"] = nf.res_orbit;
  rep.metrics["res_level"] = nf.res_level;
  rep.metrics["res_velocity"] = nf.res_velocity;
  rep.metrics["res_hessian"] = nf.res_hessian;
  rep.metrics["res_kernel"] = nf.res_kernel;
  rep.metrics["shift_identity"] = shift_err;
  rep.metrics["rank_margin"] = nf.rank_margin;
  rep.metrics["ndot0_norm"] = nf.ndot0_norm;

  const bool ok = nf.res_orbit < res_tol && nf.res_level < res_tol &&
                  nf.res_velocity < res_tol && nf.res_hessian < res_tol &&
                  shift_err < res_tol && nf.res_kernel < kernel_tol;
  rep.verdict = ok ? "certified" : "residuals_exceeded";
  rep.pass = ok;
  rep.note = "max_res=" +
             fmt(std::max({nf.res_orbit, nf.res_level, nf.res_velocity,
                           nf.res_hessian, shift_err}));
}

inline void task_poincare(const scenario::Scenario& sc,
                          const scenario::ScnNode& t, TaskReport& rep) {
  const Hamiltonian& H = need_ham(sc, t);
  const VectorXd q0 = vec_at(t, "q0", sc.dim);
  const VectorXd p0 = vec_at(t, "p0", sc.dim);
  const double span = t.at("span").num();
  const int n_max = static_cast<int>(t.int_or("n-max", 12));

  Monodromy mono = monodromy_matrix(H, q0, p0, span);
  JetValue j = H.phase_jet(q0, p0, 1);
  VectorXd grad = j.grad;
  VectorXd xi(2 * sc.dim);
  xi.head(sc.dim) = grad.tail(sc.dim);
  xi.tail(sc.dim) = -grad.head(sc.dim);
  variational::PoincareReduced red =
      variational::poincare_reduction(mono.X, xi, grad);
  variational::Nondegeneracy nd = variational::nondegeneracy(red.dP, n_max);

  rep.metrics["monodromy_defect"] = mono.symplectic_defect;
  rep.metrics["reduced_defect"] = red.sympl_defect;
  rep.metrics["min_root_distance"] = nd.min_root_distance;
  rep.metrics["critical_n"] = nd.critical_n;
  rep.metrics["elliptic_pairs"] = nd.elliptic_pairs;
  rep.metrics["hyperbolic_pairs"] = nd.hyperbolic_pairs;
  rep.metrics["parabolic_pairs"] = nd.parabolic_pairs;

  rep.verdict = nd.degenerate ? "degenerate" : "nondegenerate";
  const std::string expect = t.str_or("expect", "nondegenerate");
  rep.pass = rep.verdict == expect;
  rep.note = "min_root_dist=" + fmt(nd.min_root_distance);
}

inline void task_mane(const scenario::Scenario& sc,
                      const scenario::ScnNode& t, TaskReport& rep,
                      int threads) {
  const int d = static_cast<int>(t.at("dim").integer());
  const int deg = static_cast<int>(t.int_or("deg", 3));
  const int samples = static_cast<int>(t.at("samples").integer());
  const unsigned seed =
      static_cast<unsigned>(t.int_or("seed", static_cast<long>(sc.seed)));
  const int lmax = static_cast<int>(t.int_or("lmax", 5));
  const double min_rate = t.num_or("min-pass-rate", 0.95);

  ScanStats st = run_scan(d, deg, samples, seed, lmax, 0.0, threads);
  rep.metrics = scan_to_json(st);
  rep.metrics["dim"] = d;
  rep.pass = st.pass_rate() >= min_rate;
  rep.verdict = rep.pass ? "spanning" : "rank_deficient";
  rep.note = "pass_rate=" + fmt(st.pass_rate());
}

inline void task_formula_verify(const scenario::Scenario& sc,
                                const scenario::ScnNode& t, TaskReport& rep) {
  std::vector<int> dims;
  if (t.has("dim"))
    dims.push_back(static_cast<int>(t.at("dim").integer()));
  else
    for (int d = 2; d <= 6; ++d) dims.push_back(d);

  bool all = true;
  double worst = 0.0;
  ordered_json per = ordered_json::array();
  for (int d : dims) {
    for (const auto& row : formula_battery(d, sc.seed)) {
      ordered_json rj;
      rj["d"] = d;
      rj["name"] = row.name;
      rj["err"] = row.err;
      rj["tol"] = row.tol;
      rj["pass"] = row.pass();
      per.push_back(rj);
      all = all && row.pass();
      worst = std::max(worst, row.err);
    }
  }
  rep.metrics["rows"] = per;
  rep.pass = all;
  rep.verdict = all ? "exact" : "mismatch";
  rep.note = "max_err=" + fmt(worst);
}

inline void task_lifts(const scenario::Scenario& sc,
                       const scenario::ScnNode& t, TaskReport& rep) {
  const Hamiltonian& H = need_ham(sc, t);
  const Frame& fr = need_frame(sc, t);
  if (sc.metric.empty())
    throw DomainError("scenario: lifts task needs a frame metric at " +
                      t.path);
  const VectorXd q0 = vec_at(t, "q0", sc.dim);
  const VectorXd p0 = vec_at(t, "p0", sc.dim);
  const double span = t.at("span").num();
  const double gap_tol = t.num_or("gap-tol", 1e-7);

  PhaseOrbit orb = hamiltonian_flow(H, q0, p0, span);
  const auto& metric = sc.metric;
  auto ctrl = [&fr, &metric, &orb](double s) -> VectorXd {
    const VectorXd q = orb.q_at(s);
    const VectorXd w = fr.frame_matrix(q).transpose() * orb.p_at(s);
    const int d = fr.rank();
    MatrixXd g(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) g(i, j) = metric[i][j].eval(q);
    return g.llt().solve(w);
  };
  HorizontalCurve curve =
      integrate_horizontal(fr, q0, ControlCurve{ctrl, span});
  Expr U = sc.potential ? *sc.potential : Expr::constant(0.0, sc.dim);
  lifts::NormalLift lift = lifts::lift_normal(fr, metric, U, curve, p0);

  double gap = 0.0;
  std::ostringstream csv;
  csv.precision(17);
  csv << "t";
  for (int i = 0; i < sc.dim; ++i) csv << ",p_lift" << i + 1;
  for (int i = 0; i < sc.dim; ++i) csv << ",p_flow" << i + 1;
  csv << "\n";
  for (int k = 0; k <= 128; ++k) {
    double s = span * k / 128.0;
    VectorXd pl = lift.covector(s), pf = orb.p_at(s);
    gap = std::max(gap, (pl - pf).norm());
    csv << s;
    for (int i = 0; i < sc.dim; ++i) csv << "," << pl[i];
    for (int i = 0; i < sc.dim; ++i) csv << "," << pf[i];
    csv << "\n";
  }
  lifts::AbnormalCovector ab = lifts::abnormal_search(fr, curve);

  rep.metrics["max_gap"] = gap;
  rep.metrics["energy_drift"] = lift.energy_drift;
  rep.metrics["velocity_gap"] = lift.velocity_gap;
  rep.metrics["abnormal_found"] = ab.found;
  rep.artifacts.emplace_back("covectors_" + std::to_string(rep.index) + ".csv",
                             csv.str());

  bool ok = gap < gap_tol && lift.velocity_gap < 1e-6;
  if (t.has("expect-abnormal"))
    ok = ok && (ab.found == (t.at("expect-abnormal").value == "true"));
  rep.verdict = ok ? "lift_consistent" : "lift_mismatch";
  rep.pass = ok;
  rep.note = "max_gap=" + fmt(gap);
}

}  // namespace detail

inline RunReport run_scenario(const scenario::Scenario& sc, int threads = 1) {
  RunReport out;
  out.scenario = sc.name;
  out.seed = sc.seed;
  out.threads = threads;
  int idx = 0;
  for (const auto& t : sc.tasks) {
    TaskReport rep;
    rep.index = idx++;
    rep.kind = t.value;
    try {
      if (t.value == "flow")
        detail::task_flow(sc, t, rep);
      else if (t.value == "regularity")
        detail::task_regularity(sc, t, rep);
      else if (t.value == "normal-form")
        detail::task_normal_form(sc, t, rep);
      else if (t.value == "poincare")
        detail::task_poincare(sc, t, rep);
      else if (t.value == "mane-check" || t.value == "scan")
        detail::task_mane(sc, t, rep, threads);
      else if (t.value == "formula-verify")
        detail::task_formula_verify(sc, t, rep);
      else if (t.value == "lifts")
        detail::task_lifts(sc, t, rep);
    } catch (const Error& e) {
      rep.pass = false;
      rep.verdict = "error";
      rep.note = e.what();
    }
    out.pass = out.pass && rep.pass;
    out.tasks.push_back(std::move(rep));
  }
  return out;
}

}  // namespace runner
}  // namespace subrq
