#pragma once

#include <functional>

#include "subrq/common.hpp"

namespace subrq {

// Explicit adaptive Runge-Kutta of order 8 with embedded 5th/3rd-order
// error control and 7th-order dense output (Dormand-Prince 8(5,3) scheme,
// standard coefficient set). Residual guarantees are certified at accepted
// step nodes, where the stored derivative equals the RHS exactly; between
// nodes the interpolant is 7th-order accurate.
using OdeRhs = std::function<VectorXd(double, const VectorXd&)>;

struct OdeOptions {
  double rtol = 1e-11;
  double atol = 1e-13;
  double hmax = 0.0;  // 0: span
  double hinit = 0.0; // 0: automatic
  long max_steps = 4000000;
};

class DenseSolution {
 public:
  struct Step {
    double t0, h;
    VectorXd rc1, rc2, rc3, rc4, rc5, rc6, rc7, rc8;
  };

  double t_begin() const { return ts_.front(); }
  double t_end() const { return ts_.back(); }
  const std::vector<double>& node_times() const { return ts_; }
  const std::vector<VectorXd>& node_states() const { return ys_; }
  const std::vector<VectorXd>& node_derivs() const { return fs_; }

  VectorXd eval(double t) const {
    if (steps_.empty()) return ys_.front();
    double lo = std::min(ts_.front(), ts_.back());
    double hi = std::max(ts_.front(), ts_.back());
    if (t < lo - 1e-9 || t > hi + 1e-9)
      throw Error("dense evaluation outside integration span");
    // Locate the step containing t.
    std::size_t a = 0, b = steps_.size();
    const bool fwd = steps_.front().h > 0;
    while (b - a > 1) {
      std::size_t m = (a + b) / 2;
      if (fwd ? (steps_[m].t0 <= t) : (steps_[m].t0 >= t))
        a = m;
      else
        b = m;
    }
    const Step& st = steps_[a];
    double s = (t - st.t0) / st.h, s1 = 1.0 - s;
    return st.rc1 +
           s * (st.rc2 +
                s1 * (st.rc3 +
                      s * (st.rc4 +
                           s1 * (st.rc5 +
                                 s * (st.rc6 + s1 * (st.rc7 + s * st.rc8))))));
  }

  double max_step() const {
    double m = 0.0;
    for (const auto& s : steps_) m = std::max(m, std::abs(s.h));
    return m;
  }

  std::vector<double> ts_;
  std::vector<VectorXd> ys_, fs_;
  std::vector<Step> steps_;
};

namespace dop853 {

// Nodes, stage coefficients, and weights of the 12-stage core.
constexpr double c2 = 0.526001519587677318785587544488e-01,
    c3 = 0.789002279381515978178381316732e-01,
    c4 = 0.118350341907227396726757197510e+00,
    c5 = 0.281649658092772603273242802490e+00,
    c6 = 0.333333333333333333333333333333e+00, c7 = 0.25e+00,
    c8 = 0.307692307692307692307692307692e+00,
    c9 = 0.651282051282051282051282051282e+00, c10 = 0.6e+00,
    c11 = 0.857142857142857142857142857142e+00;

constexpr double b1 = 5.42937341165687622380535766363e-2,
    b6 = 4.45031289275240888144113950566e0,
    b7 = 1.89151789931450038304281599044e0,
    b8 = -5.8012039600105847814672114227e0,
    b9 = 3.1116436695781989440891606237e-1,
    b10 = -1.52160949662516078556178806805e-1,
    b11 = 2.01365400804030348374776537501e-1,
    b12 = 4.47106157277725905176885569043e-2;

constexpr double a21 = 5.26001519587677318785587544488e-2,
    a31 = 1.97250569845378994544595329183e-2,
    a32 = 5.91751709536136983633785987549e-2,
    a41 = 2.95875854768068491816892993775e-2,
    a43 = 8.87627564304205475450678981324e-2,
    a51 = 2.41365134159266685502369798665e-1,
    a53 = -8.84549479328286085344864962717e-1,
    a54 = 9.24834003261792003115737966543e-1,
    a61 = 3.7037037037037037037037037037e-2,
    a64 = 1.70828608729473871279604482173e-1,
    a65 = 1.25467687566822425016691814123e-1, a71 = 3.7109375e-2,
    a74 = 1.70252211019544039314978060272e-1,
    a75 = 6.02165389804559606850219397283e-2, a76 = -1.7578125e-2;

constexpr double a81 = 3.70920001185047927108779319836e-2,
    a84 = 1.70383925712239993810214054705e-1,
    a85 = 1.07262030446373284651809199168e-1,
    a86 = -1.53194377486244017527936158236e-2,
    a87 = 8.27378916381402288758473766002e-3,
    a91 = 6.24110958716075717114429577812e-1,
    a94 = -3.36089262944694129406857109825e0,
    a95 = -8.68219346841726006818189891453e-1,
    a96 = 2.75920996994467083049415600797e1,
    a97 = 2.01540675504778934086186788979e1,
    a98 = -4.34898841810699588477366255144e1,
    a101 = 4.77662536438264365890433908527e-1,
    a104 = -2.48811461997166764192642586468e0,
    a105 = -5.90290826836842996371446475743e-1,
    a106 = 2.12300514481811942347288949897e1,
    a107 = 1.52792336328824235832596922938e1,
    a108 = -3.32882109689848629194453265587e1,
    a109 = -2.03312017085086261358222928593e-2;

constexpr double a111 = -9.3714243008598732571704021658e-1,
    a114 = 5.18637242884406370830023853209e0,
    a115 = 1.09143734899672957818500254654e0,
    a116 = -8.14978701074692612513997267357e0,
    a117 = -1.85200656599969598641566180701e1,
    a118 = 2.27394870993505042818970056734e1,
    a119 = 2.49360555267965238987089396762e0,
    a1110 = -3.0467644718982195003823669022e0,
    a121 = 2.27331014751653820792359768449e0,
    a124 = -1.05344954667372501984066689879e1,
    a125 = -2.00087205822486249909675718444e0,
    a126 = -1.79589318631187989172765950534e1,
    a127 = 2.79488845294199600508499808837e1,
    a128 = -2.85899827713502369474065508674e0,
    a129 = -8.87285693353062954433549289258e0,
    a1210 = 1.23605671757943030647266201528e1,
    a1211 = 6.43392746015763530355970484046e-1;

constexpr double bhh1 = 0.244094488188976377952755905512e+00,
    bhh2 = 0.733846688281611857341361741547e+00,
    bhh3 = 0.220588235294117647058823529412e-01,
    er1 = 0.1312004499419488073250102996e-01,
    er6 = -0.1225156446376204440720569753e+01,
    er7 = -0.4957589496572501915214079952e+00,
    er8 = 0.1664377182454986536961530415e+01,
    er9 = -0.3503288487499736816886487290e+00,
    er10 = 0.3341791187130174790297318841e+00,
    er11 = 0.8192320648511571246570742613e-01,
    er12 = -0.2235530786388629525884427845e-01;

// Extra stages and weights of the 7th-order interpolant.
constexpr double c14 = 0.1e+00, c15 = 0.2e+00,
    c16 = 0.777777777777777777777777777778e+00;

constexpr double a141 = 5.61675022830479523392909219681e-2,
    a147 = 2.53500210216624811088794765333e-1,
    a148 = -2.46239037470802489917441475441e-1,
    a149 = -1.24191423263816360469010140626e-1,
    a1410 = 1.5329179827876569731206322685e-1,
    a1411 = 8.20105229563468988491666602057e-3,
    a1412 = 7.56789766054569976138603589584e-3, a1413 = -8.298e-3;

constexpr double a151 = 3.18346481635021405060768473261e-2,
    a156 = 2.83009096723667755288322961402e-2,
    a157 = 5.35419883074385676223797384372e-2,
    a158 = -5.49237485713909884646569340306e-2,
    a1511 = -1.08347328697249322858509316994e-4,
    a1512 = 3.82571090835658412954920192323e-4,
    a1513 = -3.40465008687404560802977114492e-4,
    a1514 = 1.41312443674632500278074618366e-1;

constexpr double a161 = -4.28896301583791923408573538692e-1,
    a166 = -4.69762141536116384314449447206e0,
    a167 = 7.68342119606259904184240953878e0,
    a168 = 4.06898981839711007970213554331e0,
    a169 = 3.56727187455281109270669543021e-1,
    a1613 = -1.39902416515901462129418009734e-3,
    a1614 = 2.9475147891527723389556272149e0,
    a1615 = -9.15095847217987001081870187138e0;

constexpr double d41 = -0.84289382761090128651353491142e+01,
    d46 = 0.56671495351937776962531783590e+00,
    d47 = -0.30689499459498916912797304727e+01,
    d48 = 0.23846676565120698287728149680e+01,
    d49 = 0.21170345824450282767155149946e+01,
    d410 = -0.87139158377797299206789907490e+00,
    d411 = 0.22404374302607882758541771650e+01,
    d412 = 0.63157877876946881815570249290e+00,
    d413 = -0.88990336451333310820698117400e-01,
    d414 = 0.18148505520854727256656404962e+02,
    d415 = -0.91946323924783554000451984436e+01,
    d416 = -0.44360363875948939664310572000e+01;

constexpr double d51 = 0.10427508642579134603413151009e+02,
    d56 = 0.24228349177525818288430175319e+03,
    d57 = 0.16520045171727028198505394887e+03,
    d58 = -0.37454675472269020279518312152e+03,
    d59 = -0.22113666853125306036270938578e+02,
    d510 = 0.77334326684722638389603898808e+01,
    d511 = -0.30674084731089398182061213626e+02,
    d512 = -0.93321305264302278729567221706e+01,
    d513 = 0.15697238121770843886131091075e+02,
    d514 = -0.31139403219565177677282850411e+02,
    d515 = -0.93529243588444783865713862664e+01,
    d516 = 0.35816841486394083752465898540e+02;

constexpr double d61 = 0.19985053242002433820987653617e+02,
    d66 = -0.38703730874935176555105901742e+03,
    d67 = -0.18917813819516756882830838328e+03,
    d68 = 0.52780815920542364900561016686e+03,
    d69 = -0.11573902539959630126141871134e+02,
    d610 = 0.68812326946963000169666922661e+01,
    d611 = -0.10006050966910838403183860980e+01,
    d612 = 0.77771377980534432092869265740e+00,
    d613 = -0.27782057523535084065932004339e+01,
    d614 = -0.60196695231264120758267380846e+02,
    d615 = 0.84320405506677161018159903784e+02,
    d616 = 0.11992291136182789328035130030e+02;

constexpr double d71 = -0.25693933462703749003312586129e+02,
    d76 = -0.15418974869023643374053993627e+03,
    d77 = -0.23152937917604549567536039109e+03,
    d78 = 0.35763911791061412378285349910e+03,
    d79 = 0.93405324183624310003907691704e+02,
    d710 = -0.37458323136451633156875139351e+02,
    d711 = 0.10409964950896230045147246184e+03,
    d712 = 0.29840293426660503123344363579e+02,
    d713 = -0.43533456590011143754432175058e+02,
    d714 = 0.96324553959188282948394950600e+02,
    d715 = -0.39177261675615439165231486172e+02,
    d716 = -0.14972683625798562581422125276e+03;

}  // namespace dop853

inline DenseSolution ode_integrate(const OdeRhs& rhs, double t0, double t1,
                                   VectorXd y0, OdeOptions opt = {}) {
  using namespace dop853;
  const int n = static_cast<int>(y0.size());
  const double posneg = (t1 >= t0) ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);
  if (span == 0.0) {
    DenseSolution sol;
    sol.ts_ = {t0};
    sol.ys_ = {y0};
    sol.fs_ = {rhs(t0, y0)};
    return sol;
  }
  const double hmax = opt.hmax > 0 ? opt.hmax : span;
  const double safe = 0.9, fac1 = 1.0 / 3.0, fac2 = 6.0;
  const double facc1 = 1.0 / fac1, facc2 = 1.0 / fac2, expo1 = 0.125;

  DenseSolution sol;
  double t = t0;
  VectorXd y = y0;
  VectorXd k1 = rhs(t, y);
  sol.ts_.push_back(t);
  sol.ys_.push_back(y);
  sol.fs_.push_back(k1);

  auto sk_of = [&](int i, const VectorXd& a, const VectorXd& b) {
    return opt.atol + opt.rtol * std::max(std::abs(a[i]), std::abs(b[i]));
  };

  // Automatic initial step: balance first and estimated second derivative.
  double h;
  if (opt.hinit > 0) {
    h = opt.hinit * posneg;
  } else {
    double dnf = 0, dny = 0;
    for (int i = 0; i < n; ++i) {
      double sk = opt.atol + opt.rtol * std::abs(y[i]);
      dnf += (k1[i] / sk) * (k1[i] / sk);
      dny += (y[i] / sk) * (y[i] / sk);
    }
    h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, hmax) * posneg;
    VectorXd y1 = y + h * k1;
    VectorXd k2e = rhs(t + h, y1);
    double der2 = 0;
    for (int i = 0; i < n; ++i) {
      double sk = opt.atol + opt.rtol * std::abs(y[i]);
      der2 += ((k2e[i] - k1[i]) / sk) * ((k2e[i] - k1[i]) / sk);
    }
    der2 = std::sqrt(der2) / std::abs(h);
    double der12 = std::max(der2, std::sqrt(dnf));
    double h1 = der12 <= 1e-15 ? std::max(1e-6, std::abs(h) * 1e-3)
                               : std::pow(0.01 / der12, 0.125);
    h = std::min({100.0 * std::abs(h), h1, hmax}) * posneg;
  }

  long nstep = 0;
  bool last = false;
  while (true) {
    if (nstep++ > opt.max_steps) throw NumericError("ODE step limit exceeded");
    if ((t + 1.01 * h - t1) * posneg > 0.0) {
      h = t1 - t;
      last = true;
    }

    VectorXd k2 = rhs(t + c2 * h, y + h * (a21 * k1));
    VectorXd k3 = rhs(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
    VectorXd k4 = rhs(t + c4 * h, y + h * (a41 * k1 + a43 * k3));
    VectorXd k5 = rhs(t + c5 * h, y + h * (a51 * k1 + a53 * k3 + a54 * k4));
    VectorXd k6 = rhs(t + c6 * h, y + h * (a61 * k1 + a64 * k4 + a65 * k5));
    VectorXd k7 =
        rhs(t + c7 * h, y + h * (a71 * k1 + a74 * k4 + a75 * k5 + a76 * k6));
    VectorXd k8 = rhs(t + c8 * h, y + h * (a81 * k1 + a84 * k4 + a85 * k5 +
                                           a86 * k6 + a87 * k7));
    VectorXd k9 = rhs(t + c9 * h, y + h * (a91 * k1 + a94 * k4 + a95 * k5 +
                                           a96 * k6 + a97 * k7 + a98 * k8));
    VectorXd k10 =
        rhs(t + c10 * h, y + h * (a101 * k1 + a104 * k4 + a105 * k5 +
                                  a106 * k6 + a107 * k7 + a108 * k8 +
                                  a109 * k9));
    VectorXd k11 =
        rhs(t + c11 * h, y + h * (a111 * k1 + a114 * k4 + a115 * k5 +
                                  a116 * k6 + a117 * k7 + a118 * k8 +
                                  a119 * k9 + a1110 * k10));
    double tph = t + h;
    VectorXd k12 =
        rhs(tph, y + h * (a121 * k1 + a124 * k4 + a125 * k5 + a126 * k6 +
                          a127 * k7 + a128 * k8 + a129 * k9 + a1210 * k10 +
                          a1211 * k11));
    VectorXd kb = b1 * k1 + b6 * k6 + b7 * k7 + b8 * k8 + b9 * k9 +
                  b10 * k10 + b11 * k11 + b12 * k12;
    VectorXd ynew = y + h * kb;

    // Combined 5th/3rd-order error estimate.
    double err5 = 0, err3 = 0;
    for (int i = 0; i < n; ++i) {
      double sk = sk_of(i, y, ynew);
      double e3 = (kb[i] - bhh1 * k1[i] - bhh2 * k9[i] - bhh3 * k12[i]) / sk;
      err3 += e3 * e3;
      double e5 = (er1 * k1[i] + er6 * k6[i] + er7 * k7[i] + er8 * k8[i] +
                   er9 * k9[i] + er10 * k10[i] + er11 * k11[i] +
                   er12 * k12[i]) /
                  sk;
      err5 += e5 * e5;
    }
    double deno = err5 + 0.01 * err3;
    double err = std::abs(h) * err5 * std::sqrt(1.0 / (n * (deno <= 0.0 ? 1.0 : deno)));

    double fac11 = std::pow(err, expo1);
    if (err <= 1.0) {
      // Accept: build the interpolant for this step.
      VectorXd fnew = rhs(tph, ynew);
      DenseSolution::Step st;
      st.t0 = t;
      st.h = h;
      st.rc1 = y;
      VectorXd ydiff = ynew - y;
      st.rc2 = ydiff;
      VectorXd bspl = h * k1 - ydiff;
      st.rc3 = bspl;
      st.rc4 = ydiff - h * fnew - bspl;
      st.rc5 = d41 * k1 + d46 * k6 + d47 * k7 + d48 * k8 + d49 * k9 +
               d410 * k10 + d411 * k11 + d412 * k12;
      st.rc6 = d51 * k1 + d56 * k6 + d57 * k7 + d58 * k8 + d59 * k9 +
               d510 * k10 + d511 * k11 + d512 * k12;
      st.rc7 = d61 * k1 + d66 * k6 + d67 * k7 + d68 * k8 + d69 * k9 +
               d610 * k10 + d611 * k11 + d612 * k12;
      st.rc8 = d71 * k1 + d76 * k6 + d77 * k7 + d78 * k8 + d79 * k9 +
               d710 * k10 + d711 * k11 + d712 * k12;
      VectorXd f13 =
          rhs(t + c14 * h, y + h * (a141 * k1 + a147 * k7 + a148 * k8 +
                                    a149 * k9 + a1410 * k10 + a1411 * k11 +
                                    a1412 * k12 + a1413 * fnew));
      VectorXd f14 =
          rhs(t + c15 * h, y + h * (a151 * k1 + a156 * k6 + a157 * k7 +
                                    a158 * k8 + a1511 * k11 + a1512 * k12 +
                                    a1513 * fnew + a1514 * f13));
      VectorXd f15 =
          rhs(t + c16 * h, y + h * (a161 * k1 + a166 * k6 + a167 * k7 +
                                    a168 * k8 + a169 * k9 + a1613 * fnew +
                                    a1614 * f13 + a1615 * f14));
      st.rc5 =
          h * (st.rc5 + d413 * fnew + d414 * f13 + d415 * f14 + d416 * f15);
      st.rc6 =
          h * (st.rc6 + d513 * fnew + d514 * f13 + d515 * f14 + d516 * f15);
      st.rc7 =
          h * (st.rc7 + d613 * fnew + d614 * f13 + d615 * f14 + d616 * f15);
      st.rc8 =
          h * (st.rc8 + d713 * fnew + d714 * f13 + d715 * f14 + d716 * f15);
      sol.steps_.push_back(std::move(st));

      t = tph;
      y = ynew;
      k1 = fnew;
      sol.ts_.push_back(t);
      sol.ys_.push_back(y);
      sol.fs_.push_back(k1);
      if (last) break;

      double fac = std::max(facc2, std::min(facc1, fac11 / safe));
      h = h / fac;
      if (std::abs(h) > hmax) h = hmax * posneg;
    } else {
      h = h / std::min(facc1, fac11 / safe);
      last = false;
    }
  }
  return sol;
}

}  // namespace subrq
