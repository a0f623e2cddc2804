#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "natmed/eif.hpp"
#include "natmed/simulate.hpp"

using namespace natmed;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One dataset row per support point of the discrete process, with the exact
// point probability alongside, so expectations become weighted sums.
struct Enumerated {
  Dataset data;
  Eigen::ArrayXd prob;
};

Enumerated enumerate_dgp1() {
  auto g_a1 = [](double w1, double w2) { return expit(w1 - w2); };
  auto p_s = [](int a, double w1, double w2) {
    return expit(-1.0 + w1 / 4 - w2 / 3 + a / 2.0);
  };
  auto binom2 = [](double p, int s) {
    const double q = 1.0 - p;
    return s == 0 ? q * q : s == 1 ? 2 * p * q : p * p;
  };
  auto mu_y = [](int a, double w1, int s) { return expit(-2.0 + a / 2.0 + w1 / 2 - s / 2.0); };
  auto g_c = [](double w1, double w2) { return expit(2.0 + w1 / 2 - w2 / 3); };

  std::vector<double> w1c, w2c, sc, cyc, pr;
  std::vector<int> ac, rc, cc;
  auto push = [&](double w1, double w2, int a, int r, double s, int c, double cy, double p) {
    w1c.push_back(w1);
    w2c.push_back(w2);
    ac.push_back(a);
    rc.push_back(r);
    sc.push_back(s);
    cc.push_back(c);
    cyc.push_back(cy);
    pr.push_back(p);
  };

  for (int w1 = 0; w1 < 2; ++w1)
    for (int w2 = 0; w2 < 2; ++w2)
      for (int a = 0; a < 2; ++a) {
        const double pw_a = 0.25 * (a == 1 ? g_a1(w1, w2) : 1.0 - g_a1(w1, w2));
        double py1 = 0.0;  // P(Y=1 | A=a, W), mediator integrated out
        for (int s = 0; s < 3; ++s)
          py1 += binom2(p_s(a, w1, w2), s) * mu_y(a, w1, s);

        // Phase-two rows: mediator recorded; cases always sampled.
        for (int s = 0; s < 3; ++s)
          for (int c = 0; c < 2; ++c)
            for (int y = 0; y < 2; ++y) {
              const double cy = static_cast<double>(c * y);
              const double gr = cy == 1.0 ? 1.0 : 0.25;
              const double p = pw_a * binom2(p_s(a, w1, w2), s) *
                               (c == 1 ? g_c(w1, w2) : 1.0 - g_c(w1, w2)) *
                               (y == 1 ? mu_y(a, w1, s) : 1.0 - mu_y(a, w1, s)) * gr;
              push(w1, w2, a, 1, s, c, cy, p);
            }
        // Unsampled rows pool the mediator (and, when censored, the outcome).
        push(w1, w2, a, 0, kNaN, 1, 0.0, pw_a * g_c(w1, w2) * (1.0 - py1) * 0.75);
        push(w1, w2, a, 0, kNaN, 0, 0.0, pw_a * (1.0 - g_c(w1, w2)) * 0.75);
      }

  const int n = static_cast<int>(pr.size());
  Eigen::MatrixXd W(n, 2);
  Eigen::ArrayXi A(n), R(n), C(n);
  Eigen::ArrayXd S(n), CY(n), G(n), P(n);
  for (int i = 0; i < n; ++i) {
    W(i, 0) = w1c[i];
    W(i, 1) = w2c[i];
    A(i) = ac[i];
    R(i) = rc[i];
    S(i) = sc[i];
    C(i) = cc[i];
    CY(i) = cyc[i];
    G(i) = cyc[i] == 1.0 ? 1.0 : 0.25;
    P(i) = pr[i];
  }
  return {Dataset(W, A, R, S, C, CY, {"w1", "w2"}, "support", G), P};
}

NuisanceBundle full_bundle(const Dataset& d, TargetPair pair, const NuisanceStrategy& s,
                           double plug) {
  NuisanceBundle b;
  fit_gR(d, s, &b);
  fit_phase1_nuisances(d, pair, s, &b);
  fit_phase2_nuisances(d, pair, s, &b);
  fit_classic_second_stage(d, pair, s, &b);
  fit_alternative_second_stage(d, pair, s, &b);
  fit_eif_projection(d, eval_full_data(d, b, plug), PseudoKind::full, s, &b);
  fit_eif_projection(d, partial_pseudo_outcome(d, b), PseudoKind::partial, s, &b);
  return b;
}

}  // namespace

TEST_CASE("exact nuisances reproduce the enumerated moments") {
  Enumerated e = enumerate_dgp1();
  CHECK(std::abs(e.prob.sum() - 1.0) < 1e-12);
  const TruthRecord t = truth_dgp1();

  struct Case {
    TargetPair pair;
    double psi, bound_classic, bound_alt;
  };
  const Case cases[] = {{{1, 0}, t.psi10, t.bound10, t.bound10_alt},
                        {{0, 0}, t.psi00, t.bound00, t.bound00}};
  for (const Case& cs : cases) {
    CAPTURE(cs.pair.a1);
    NuisanceBundle b = exact_dgp1_bundle(e.data, cs.pair);
    EifColumn classic = eval_classic(e.data, b, cs.psi);
    EifColumn alt = eval_alternative(e.data, b, cs.psi);

    CHECK(std::abs((e.prob * classic.values).sum()) < 1e-12);
    CHECK(std::abs((e.prob * alt.values).sum()) < 1e-12);
    CHECK(std::abs((e.prob * classic.values.square()).sum() - cs.bound_classic) < 1e-12);
    CHECK(std::abs((e.prob * alt.values.square()).sum() - cs.bound_alt) < 1e-12);

    // Complete-data law: reweight the phase-two support points by 1/gr.
    Eigen::ArrayXd dx = eval_full_data(e.data, b, cs.psi);
    double mean_full = 0.0;
    for (int i = 0; i < e.data.n(); ++i)
      if (e.data.R()(i) == 1) mean_full += e.prob(i) / b.gr(i) * dx(i);
    CHECK(std::abs(mean_full) < 1e-12);
  }
  CHECK(t.bound10_alt == doctest::Approx(t.bound10).epsilon(1e-12));
}

TEST_CASE("full sampling removes the correction") {
  Dataset raw = gen_dgp1({2500, 21});
  std::vector<int> keep;
  for (int i = 0; i < raw.n(); ++i)
    if (raw.R()(i) == 1) keep.push_back(i);
  const int m = static_cast<int>(keep.size());
  Eigen::MatrixXd W(m, 2);
  Eigen::ArrayXi A(m), R(m), C(m);
  Eigen::ArrayXd S(m), CY(m);
  for (int k = 0; k < m; ++k) {
    const int i = keep[static_cast<size_t>(k)];
    W.row(k) = raw.W().row(i);
    A(k) = raw.A()(i);
    R(k) = 1;
    S(k) = raw.S()(i);
    C(k) = raw.C()(i);
    CY(k) = raw.CY()(i);
  }
  Dataset d(W, A, R, S, C, CY, {"w1", "w2"}, "complete");

  NuisanceBundle b = full_bundle(d, {1, 0}, preset_strategy("dgp1-saturated"), 0.3);
  CHECK((b.gr == 1.0).all());
  Eigen::ArrayXd dx = eval_full_data(d, b, 0.3);
  EifColumn classic = eval_classic(d, b, 0.3);
  CHECK((classic.values == dx).all());

  // With every fit saturated the sequential second stage equals the weighted
  // one, so the rewritten form collapses to the same values.
  EifColumn alt = eval_alternative(d, b, 0.3);
  CHECK((classic.values - alt.values).abs().maxCoeff() < 1e-10);
}

TEST_CASE("plug-in translation shifts values by its negative") {
  Dataset d = gen_dgp1({2000, 5});
  NuisanceStrategy s = preset_strategy("dgp1-all");
  const double p0 = 0.18, kappa = 0.07;
  NuisanceBundle b0 = full_bundle(d, {1, 0}, s, p0);
  NuisanceBundle b1 = full_bundle(d, {1, 0}, s, p0 + kappa);

  EifColumn c0 = eval_classic(d, b0, p0);
  EifColumn c1 = eval_classic(d, b1, p0 + kappa);
  CHECK((c1.values - (c0.values - kappa)).abs().maxCoeff() < 1e-9);

  // The rewritten form's projection ignores the plug-in entirely, so no
  // refit is needed.
  EifColumn a0 = eval_alternative(d, b0, p0);
  EifColumn a1 = eval_alternative(d, b0, p0 + kappa);
  CHECK((a1.values - (a0.values - kappa)).abs().maxCoeff() < 1e-12);
  CHECK((b0.qtd == b1.qtd).all());
}

TEST_CASE("zero outcomes yield identically zero contributions") {
  Dataset raw = gen_dgp1({800, 13});
  Eigen::ArrayXd CY = Eigen::ArrayXd::Zero(raw.n());
  Dataset d(raw.W(), raw.A(), raw.R(), raw.S(), raw.C(), CY, {"w1", "w2"}, "null");

  NuisanceBundle b = full_bundle(d, {1, 0}, preset_strategy("dgp1-saturated"), 0.0);
  EifColumn classic = eval_classic(d, b, 0.0);
  EifColumn alt = eval_alternative(d, b, 0.0);
  CHECK(classic.values.abs().maxCoeff() == 0.0);
  CHECK(alt.values.abs().maxCoeff() == 0.0);
}

TEST_CASE("pseudo-outcome honours its indicators") {
  Dataset d = gen_dgp1({1500, 3});
  NuisanceStrategy s = preset_strategy("dgp1-all");
  NuisanceBundle b;
  fit_gR(d, s, &b);
  fit_phase1_nuisances(d, {1, 0}, s, &b);
  fit_phase2_nuisances(d, {1, 0}, s, &b);
  Eigen::ArrayXd t1 = partial_pseudo_outcome(d, b);
  for (int i = 0; i < d.n(); ++i) {
    if (d.R()(i) != 1 || d.A()(i) != 1 || d.C()(i) != 1) {
      CHECK(t1(i) == 0.0);
    } else {
      const double want =
          b.aws_ratio(i) / (b.ga2(i) * b.gc1(i)) * (d.CY()(i) - b.qy(i));
      CHECK(t1(i) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("contributions respect the crude clipping bound") {
  Dataset d = gen_dgp1({2000, 17});
  NuisanceStrategy s = preset_strategy("dgp1-all");
  const double plug = 0.2;
  NuisanceBundle b = full_bundle(d, {1, 0}, s, plug);
  const double cap = 2.0 / (s.p_min * s.p_min * s.p_min);
  CHECK(eval_classic(d, b, plug).values.abs().maxCoeff() < cap);
  CHECK(eval_alternative(d, b, plug).values.abs().maxCoeff() < cap);
}

TEST_CASE("missing columns are refused") {
  Dataset d = gen_dgp1({200, 2});
  NuisanceStrategy s = preset_strategy("dgp1-all");
  NuisanceBundle b;
  fit_gR(d, s, &b);
  fit_phase1_nuisances(d, {1, 0}, s, &b);
  CHECK_THROWS_AS(eval_full_data(d, b, 0.1), ConfigError);  // no outcome regression yet
  fit_phase2_nuisances(d, {1, 0}, s, &b);
  CHECK_THROWS_AS(eval_full_data(d, b, 0.1), ConfigError);  // no second stage yet
  fit_classic_second_stage(d, {1, 0}, s, &b);
  CHECK_THROWS_AS(eval_classic(d, b, 0.1), ConfigError);  // no projection yet
  CHECK_NOTHROW(eval_full_data(d, b, 0.1));
}

TEST_CASE("csv export lists every column") {
  Dataset d = gen_dgp1({50, 4});
  NuisanceBundle b = exact_dgp1_bundle(d, {1, 0});
  const double psi = psi_dgp1({1, 0});
  std::vector<EifColumn> cols{eval_classic(d, b, psi), eval_alternative(d, b, psi)};
  const std::string path = "./eif_diag.csv";
  write_eif_csv(path, cols);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "row,variant,value");
  int classic_n = 0, alt_n = 0;
  while (std::getline(in, line)) {
    if (line.find(",classic,") != std::string::npos) ++classic_n;
    if (line.find(",alternative,") != std::string::npos) ++alt_n;
  }
  CHECK(classic_n == d.n());
  CHECK(alt_n == d.n());
  std::remove(path.c_str());
}
