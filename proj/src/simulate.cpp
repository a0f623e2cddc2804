#include "natmed/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "natmed/rng.hpp"

namespace natmed {

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// --- discrete process: generating laws ------------------------------------

double d1_gA(int a, double w1, double w2) {
  const double p = expit(w1 - w2);
  return a == 1 ? p : 1.0 - p;
}

double d1_pS(int a, double w1, double w2) { return expit(-1.0 + w1 / 4.0 - w2 / 3.0 + a / 2.0); }

// Binomial(2, p) mass at s
double d1_qS(int s, int a, double w1, double w2) {
  const double p = d1_pS(a, w1, w2);
  switch (s) {
    case 0: return (1.0 - p) * (1.0 - p);
    case 1: return 2.0 * p * (1.0 - p);
    default: return p * p;
  }
}

double d1_muY(int a, double w1, double w2, int s) {
  return expit(-2.0 + a / 2.0 + w1 / 2.0 - s / 2.0);
}

double d1_gC(int c, int a, double w1, double w2) {
  const double p = expit(2.0 + w1 / 2.0 - w2 / 3.0);
  (void)a;  // censoring does not depend on the arm in this process
  return c == 1 ? p : 1.0 - p;
}

double d1_gR(int cy) { return cy == 1 ? 1.0 : 0.25; }

double d1_psi(int a1, int a2) {
  double total = 0.0;
  for (int w1 = 0; w1 < 2; ++w1)
    for (int w2 = 0; w2 < 2; ++w2)
      for (int s = 0; s < 3; ++s)
        total += 0.25 * d1_qS(s, a2, w1, w2) * d1_muY(a1, w1, w2, s);
  return total;
}

double d1_gAWS(int a, double w1, double w2, int s) {
  const double num = d1_gA(a, w1, w2) * d1_qS(s, a, w1, w2);
  const double den = num + d1_gA(1 - a, w1, w2) * d1_qS(s, 1 - a, w1, w2);
  return num / den;
}

// E{Q_Y(a1; W, S) | A=a2, W} -- the second-stage regression truth
double d1_qq(int a1, int a2, double w1, double w2) {
  double total = 0.0;
  for (int s = 0; s < 3; ++s) total += d1_qS(s, a2, w1, w2) * d1_muY(a1, w1, w2, s);
  return total;
}

// Uncorrected per-point influence contribution for the complete-data
// functional: inverse-weighted residual, arm-a2 regression residual,
// centered second-stage value.
double d1_dx(int a1, int a2, double w1, double w2, int a, int s, int c, double cy,
             double psi) {
  const double qy = d1_muY(a1, w1, w2, s);
  const double qq = d1_qq(a1, a2, w1, w2);
  double val = qq - psi;
  if (a == a2) val += (qy - qq) / d1_gA(a2, w1, w2);
  if (a == a1 && c == 1) {
    const double ratio = d1_gAWS(a2, w1, w2, s) / d1_gAWS(a1, w1, w2, s);
    val += ratio * (cy - qy) / (d1_gA(a2, w1, w2) * d1_gC(1, a1, w1, w2));
  }
  return val;
}

// First (inverse-weighted residual) term alone; outcome of the projection
// used by the sampling-decoupled influence form.
double d1_dx_term1(int a1, int a2, double w1, double w2, int a, int s, int c, double cy) {
  if (a != a1 || c != 1) return 0.0;
  const double qy = d1_muY(a1, w1, w2, s);
  const double ratio = d1_gAWS(a2, w1, w2, s) / d1_gAWS(a1, w1, w2, s);
  return ratio * (cy - qy) / (d1_gA(a2, w1, w2) * d1_gC(1, a1, w1, w2));
}

// P(S=s | W, A, C, CY): for uncensored rows the outcome tilts the mediator
// law by Bayes' rule; censored rows carry no outcome information.
double d1_s_given_v(int s, double w1, double w2, int a, int c, double cy);

// Conditional projections of the complete-data contribution (and of its
// first term) onto (W, A, C, CY), integrating the mediator law.
double d1_qd(int a1, int a2, double w1, double w2, int a, int c, double cy, double psi) {
  double total = 0.0;
  for (int s = 0; s < 3; ++s)
    total += d1_s_given_v(s, w1, w2, a, c, cy) * d1_dx(a1, a2, w1, w2, a, s, c, cy, psi);
  return total;
}

double d1_qtd(int a1, int a2, double w1, double w2, int a, int c, double cy) {
  double total = 0.0;
  for (int s = 0; s < 3; ++s)
    total += d1_s_given_v(s, w1, w2, a, c, cy) * d1_dx_term1(a1, a2, w1, w2, a, s, c, cy);
  return total;
}

// E{Q_Y(W,S) | W, A, C, CY} and its arm-a2 marginalization, used by the
// rewritten influence form.
double d1_qt_qy(int a1, double w1, double w2, int a, int c, double cy) {
  double total = 0.0;
  for (int s = 0; s < 3; ++s)
    total += d1_s_given_v(s, w1, w2, a, c, cy) * d1_muY(a1, w1, w2, s);
  return total;
}

double d1_qt_qt(int a1, int a2, double w1, double w2) {
  double total = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 2; ++y) {
      const double cy = static_cast<double>(c * y);
      double pcy;  // P(C=c, CY=cy | A=a2, W): censored rows pool both y values
      if (c == 0) {
        pcy = d1_gC(0, a2, w1, w2);
        if (y == 1) continue;
      } else {
        double py = 0.0;
        for (int s = 0; s < 3; ++s)
          py += d1_qS(s, a2, w1, w2) * d1_muY(a2, w1, w2, s);
        pcy = d1_gC(1, a2, w1, w2) * (y == 1 ? py : 1.0 - py);
      }
      total += pcy * d1_qt_qy(a1, w1, w2, a2, c, cy);
    }
  return total;
}

double d1_s_given_v(int s, double w1, double w2, int a, int c, double cy) {
  if (c == 0) return d1_qS(s, a, w1, w2);
  double num = d1_qS(s, a, w1, w2), den = 0.0;
  const double mu_s = d1_muY(a, w1, w2, s);
  num *= (cy != 0.0) ? mu_s : (1.0 - mu_s);
  for (int t = 0; t < 3; ++t) {
    const double mu_t = d1_muY(a, w1, w2, t);
    den += d1_qS(t, a, w1, w2) * ((cy != 0.0) ? mu_t : (1.0 - mu_t));
  }
  return num / den;
}

}  // namespace

Dataset gen_dgp1(const Dgp1Spec& spec) {
  Rng rng(spec.seed);
  const int n = spec.n;
  Eigen::MatrixXd W(n, 2);
  Eigen::ArrayXi A(n), R(n), C(n);
  Eigen::ArrayXd S(n), CY(n), GR(n);
  for (int i = 0; i < n; ++i) {
    const double w1 = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double w2 = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const int a = rng.bernoulli(expit(w1 - w2)) ? 1 : 0;
    const int s = rng.binomial2(d1_pS(a, w1, w2));
    const int y = rng.bernoulli(d1_muY(a, w1, w2, s)) ? 1 : 0;
    const int c = rng.bernoulli(expit(2.0 + w1 / 2.0 - w2 / 3.0)) ? 1 : 0;
    const int cy = c * y;
    const int r = (cy == 1) ? 1 : (rng.bernoulli(0.25) ? 1 : 0);
    W(i, 0) = w1;
    W(i, 1) = w2;
    A(i) = a;
    C(i) = c;
    CY(i) = cy;
    R(i) = r;
    S(i) = r == 1 ? static_cast<double>(s) : std::numeric_limits<double>::quiet_NaN();
    GR(i) = d1_gR(cy);
  }
  return Dataset(std::move(W), std::move(A), std::move(R), std::move(S), std::move(C),
                 std::move(CY), {"w1", "w2"},
                 "dgp1(n=" + std::to_string(n) + ",seed=" + std::to_string(spec.seed) + ")",
                 std::move(GR));
}

Dataset gen_dgp2(const Dgp2Spec& spec, bool* stratum_shortfall) {
  Rng rng(spec.seed);
  const int n = spec.n;
  Eigen::MatrixXd W(n, 3);
  Eigen::ArrayXi A(n), R(n), C(n);
  Eigen::ArrayXd S(n), CY(n), GR(n);
  Eigen::ArrayXd s_val(n);
  for (int i = 0; i < n; ++i) {
    const double w1 = rng.bernoulli(0.4) ? 1.0 : 0.0;
    const double w2 = rng.bernoulli(0.25) ? 1.0 : 0.0;
    const double w3 = rng.bernoulli(0.25) ? 1.0 : 0.0;
    const int a = rng.bernoulli(0.5) ? 1 : 0;
    const double s_star = rng.normal(2.0 - 0.5 * w1, 1.0);
    const double s = (a == 1 && s_star > 0.0) ? s_star : 0.0;
    const double py =
        expit(spec.alpha - 0.5 * s - 1.8 * a + 0.2 * w1 + 0.1 * w2 + 0.7 * w3);
    const int y = rng.bernoulli(py) ? 1 : 0;
    W(i, 0) = w1;
    W(i, 1) = w2;
    W(i, 2) = w3;
    A(i) = a;
    C(i) = 1;
    CY(i) = y;
    R(i) = 0;
    s_val(i) = s;
  }

  // Stratified subcohort: within each (W-stratum, arm) draw the quota without
  // replacement from the whole stratum; cases are then upgraded to R=1.
  std::map<std::vector<int>, std::vector<int>> strata;
  for (int i = 0; i < n; ++i) {
    std::vector<int> key{static_cast<int>(W(i, 0)), static_cast<int>(W(i, 1)),
                         static_cast<int>(W(i, 2)), A(i)};
    strata[key].push_back(i);
  }
  bool shortfall = false;
  std::map<std::vector<int>, double> stratum_prob;
  for (auto& [key, rows] : strata) {
    const int quota = key[3] == 1 ? spec.per_stratum_vaccine : spec.per_stratum_placebo;
    const int size = static_cast<int>(rows.size());
    const int take = std::min(quota, size);
    if (take < quota) shortfall = true;
    for (int j = 0; j < take; ++j) {
      const int k = j + static_cast<int>(rng.uniform() * (size - j));
      std::swap(rows[static_cast<size_t>(j)], rows[static_cast<size_t>(k)]);
      R(rows[static_cast<size_t>(j)]) = 1;
    }
    stratum_prob[key] = static_cast<double>(take) / size;
  }
  for (int i = 0; i < n; ++i) {
    if (CY(i) != 0.0) R(i) = 1;
    std::vector<int> key{static_cast<int>(W(i, 0)), static_cast<int>(W(i, 1)),
                         static_cast<int>(W(i, 2)), A(i)};
    GR(i) = CY(i) != 0.0 ? 1.0 : stratum_prob[key];
    S(i) = R(i) == 1 ? s_val(i) : std::numeric_limits<double>::quiet_NaN();
  }
  if (stratum_shortfall) *stratum_shortfall = shortfall;
  return Dataset(std::move(W), std::move(A), std::move(R), std::move(S), std::move(C),
                 std::move(CY), {"w1", "w2", "w3"},
                 "dgp2(n=" + std::to_string(n) + ",alpha=" + std::to_string(spec.alpha) +
                     ",seed=" + std::to_string(spec.seed) + ")",
                 std::move(GR));
}

TruthRecord truth_dgp1() {
  TruthRecord t;
  t.method = TruthRecord::Method::enumeration;
  t.psi00 = d1_psi(0, 0);
  t.psi10 = d1_psi(1, 0);
  t.psi11 = d1_psi(1, 1);
  t.ve = 1.0 - t.psi11 / t.psi00;
  t.indirect = t.psi11 / t.psi10;
  t.direct = t.psi10 / t.psi00;
  t.prop_mediated = 1.0 - std::log(t.direct) / std::log(t.psi11 / t.psi00);

  const int pairs[3][2] = {{0, 0}, {1, 0}, {1, 1}};
  double bounds[3] = {0, 0, 0};
  for (int pi = 0; pi < 3; ++pi) {
    const int a1 = pairs[pi][0], a2 = pairs[pi][1];
    const double psi = (pi == 0) ? t.psi00 : (pi == 1 ? t.psi10 : t.psi11);

    double mean_c = 0, mean2_c = 0, mean_a = 0, mean2_a = 0;
    for (int w1 = 0; w1 < 2; ++w1)
      for (int w2 = 0; w2 < 2; ++w2)
        for (int a = 0; a < 2; ++a)
          for (int s = 0; s < 3; ++s)
            for (int c = 0; c < 2; ++c)
              for (int y = 0; y < 2; ++y) {
                const double cy = static_cast<double>(c * y);
                const double p_x = 0.25 * d1_gA(a, w1, w2) * d1_qS(s, a, w1, w2) *
                                   d1_gC(c, a, w1, w2) *
                                   (y == 1 ? d1_muY(a, w1, w2, s) : 1.0 - d1_muY(a, w1, w2, s));
                if (p_x <= 0.0) continue;
                const double gr = d1_gR(static_cast<int>(cy));
                const double dx = d1_dx(a1, a2, w1, w2, a, s, c, cy, psi);
                const double qd_v = d1_qd(a1, a2, w1, w2, a, c, cy, psi);
                const double qtd_v = d1_qtd(a1, a2, w1, w2, a, c, cy);
                const double qtqy_v = d1_qt_qy(a1, w1, w2, a, c, cy);
                const double qtqt_v = d1_qt_qt(a1, a2, w1, w2);
                for (int r = 0; r < 2; ++r) {
                  const double p = p_x * (r == 1 ? gr : 1.0 - gr);
                  if (p <= 0.0) continue;
                  const double d_classic = (r / gr) * dx + (1.0 - r / gr) * qd_v;
                  double d_alt = (a == a2 ? (qtqy_v - qtqt_v) / d1_gA(a2, w1, w2) : 0.0) +
                                 qtqt_v - psi - (qtd_v / gr) * (r - gr);
                  if (r == 1) {
                    d_alt += d1_dx_term1(a1, a2, w1, w2, a, s, c, cy) / gr;
                    if (a == a2)
                      d_alt += (d1_muY(a1, w1, w2, s) - qtqy_v) / (gr * d1_gA(a2, w1, w2));
                  }
                  mean_c += p * d_classic;
                  mean2_c += p * d_classic * d_classic;
                  mean_a += p * d_alt;
                  mean2_a += p * d_alt * d_alt;
                }
              }
    bounds[pi] = mean2_c;
    t.max_abs_eif_mean = std::max({t.max_abs_eif_mean, std::abs(mean_c), std::abs(mean_a)});
    if (pi == 1) t.bound10_alt = mean2_a;
  }
  t.bound00 = bounds[0];
  t.bound10 = bounds[1];
  t.bound11 = bounds[2];
  return t;
}

TruthRecord truth_dgp2(double alpha, long long draws, std::uint64_t seed) {
  Rng rng(seed);
  TruthRecord t;
  t.method = TruthRecord::Method::monte_carlo;
  t.draws = draws;

  // Counterfactual mean under (a1, a2): mediator drawn from its arm-a2 law,
  // outcome probability evaluated under arm a1.  Same draws serve all three
  // pairs, so derived ratios get proper delta-method errors.
  double sum[3] = {0, 0, 0};
  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  for (long long i = 0; i < draws; ++i) {
    const double w1 = rng.bernoulli(0.4) ? 1.0 : 0.0;
    const double w2 = rng.bernoulli(0.25) ? 1.0 : 0.0;
    const double w3 = rng.bernoulli(0.25) ? 1.0 : 0.0;
    const double s_star = rng.normal(2.0 - 0.5 * w1, 1.0);
    const double s_treated = s_star > 0.0 ? s_star : 0.0;
    const double base = alpha + 0.2 * w1 + 0.1 * w2 + 0.7 * w3;
    const double p00 = expit(base);                       // a1=0, a2=0 => s=0
    const double p10 = expit(base - 1.8);                 // a1=1, mediator from control law
    const double p11 = expit(base - 1.8 - 0.5 * s_treated);
    const Eigen::Vector3d v(p00, p10, p11);
    sum[0] += p00;
    sum[1] += p10;
    sum[2] += p11;
    cross += v * v.transpose();
  }
  const double nd = static_cast<double>(draws);
  const Eigen::Vector3d mean(sum[0] / nd, sum[1] / nd, sum[2] / nd);
  Eigen::Matrix3d cov = cross / nd - mean * mean.transpose();  // per-draw covariance

  t.psi00 = mean(0);
  t.psi10 = mean(1);
  t.psi11 = mean(2);
  t.ve = 1.0 - t.psi11 / t.psi00;
  t.indirect = t.psi11 / t.psi10;
  t.direct = t.psi10 / t.psi00;
  const double num = std::log(t.direct);
  const double den = std::log(t.psi11 / t.psi00);
  t.prop_mediated = 1.0 - num / den;

  const Eigen::Matrix3d se_cov = cov / nd;  // covariance of the three means
  t.mc_se_psi00 = std::sqrt(se_cov(0, 0));
  t.mc_se_psi10 = std::sqrt(se_cov(1, 1));
  t.mc_se_psi11 = std::sqrt(se_cov(2, 2));
  auto grad_se = [&](const Eigen::Vector3d& g) { return std::sqrt(g.dot(se_cov * g)); };
  t.mc_se_ve = grad_se(Eigen::Vector3d(t.psi11 / (t.psi00 * t.psi00), 0.0, -1.0 / t.psi00));
  t.mc_se_indirect =
      grad_se(Eigen::Vector3d(0.0, -t.psi11 / (t.psi10 * t.psi10), 1.0 / t.psi10));
  t.mc_se_direct = grad_se(Eigen::Vector3d(-t.psi10 / (t.psi00 * t.psi00), 1.0 / t.psi00, 0.0));
  // order (psi00, psi10, psi11) with f = 1 - log(x1/x0)/log(x2/x0)
  const double x0 = t.psi00, x1 = t.psi10, x2 = t.psi11;
  t.mc_se_pm = grad_se(Eigen::Vector3d((den - num) / (x0 * den * den), -1.0 / (x1 * den),
                                       num / (den * den * x2)));
  return t;
}

double psi_dgp1(TargetPair pair) { return d1_psi(pair.a1, pair.a2); }

NuisanceBundle exact_dgp1_bundle(const Dataset& d, TargetPair pair) {
  if (d.p() != 2) throw ConfigError("closed forms need the two binary covariates");
  const int a1 = pair.a1, a2 = pair.a2;
  const double psi = d1_psi(a1, a2);
  const int n = d.n();

  NuisanceBundle b;
  b.pair = pair;
  b.p_min = 0.0;
  b.gr.resize(n);
  b.ga2.resize(n);
  b.gc1.resize(n);
  b.aws_ratio = Eigen::ArrayXd::Zero(n);
  b.qy = Eigen::ArrayXd::Zero(n);
  b.qqy.resize(n);
  b.qtqy.resize(n);
  b.qtqt.resize(n);
  b.qd.resize(n);
  b.qtd.resize(n);
  for (int i = 0; i < n; ++i) {
    const double w1 = d.W()(i, 0), w2 = d.W()(i, 1);
    const int a = d.A()(i), c = d.C()(i);
    const double cy = d.CY()(i);
    b.gr(i) = d1_gR(cy == 1.0 ? 1 : 0);
    b.ga2(i) = d1_gA(a2, w1, w2);
    b.gc1(i) = d1_gC(1, a1, w1, w2);
    b.qqy(i) = d1_qq(a1, a2, w1, w2);
    b.qtqy(i) = d1_qt_qy(a1, w1, w2, a, c, cy);
    b.qtqt(i) = d1_qt_qt(a1, a2, w1, w2);
    b.qd(i) = d1_qd(a1, a2, w1, w2, a, c, cy, psi);
    b.qtd(i) = d1_qtd(a1, a2, w1, w2, a, c, cy);
    if (d.R()(i) == 1) {
      const int s = static_cast<int>(d.S()(i));
      b.qy(i) = d1_muY(a1, w1, w2, s);
      b.aws_ratio(i) = d1_gAWS(a2, w1, w2, s) / d1_gAWS(a1, w1, w2, s);
    }
  }
  b.aws_skipped = a1 == a2;
  b.provenance.push_back("closed-form nuisances");
  return b;
}

}  // namespace natmed
