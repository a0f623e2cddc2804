#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <vector>

#include "natmed/simulate.hpp"

using namespace natmed;

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool same_dataset(const Dataset& a, const Dataset& b) {
  if (a.n() != b.n()) return false;
  for (int i = 0; i < a.n(); ++i) {
    if (a.W().row(i) != b.W().row(i) || a.A()(i) != b.A()(i) || a.R()(i) != b.R()(i) ||
        a.C()(i) != b.C()(i) || a.CY()(i) != b.CY()(i))
      return false;
    const bool sa = std::isnan(a.S()(i)), sb = std::isnan(b.S()(i));
    if (sa != sb || (!sa && a.S()(i) != b.S()(i))) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("generators are seed deterministic") {
  Dgp1Spec s1;
  s1.n = 400;
  s1.seed = 17;
  CHECK(same_dataset(gen_dgp1(s1), gen_dgp1(s1)));
  Dgp1Spec s1b = s1;
  s1b.seed = 18;
  CHECK_FALSE(same_dataset(gen_dgp1(s1), gen_dgp1(s1b)));

  Dgp2Spec s2;
  s2.n = 2000;
  s2.seed = 17;
  CHECK(same_dataset(gen_dgp2(s2), gen_dgp2(s2)));
  Dgp2Spec s2b = s2;
  s2b.seed = 18;
  CHECK_FALSE(same_dataset(gen_dgp2(s2), gen_dgp2(s2b)));
}

TEST_CASE("two-phase structure of the discrete process") {
  Dgp1Spec spec;
  spec.n = 100000;
  spec.seed = 4;
  Dataset d = gen_dgp1(spec);
  REQUIRE(d.n() == spec.n);
  REQUIRE(d.p() == 2);
  REQUIRE(d.has_design_gr());

  int non_case = 0, non_case_sampled = 0;
  double w1_sum = 0;
  for (int i = 0; i < d.n(); ++i) {
    const bool is_case = d.CY()(i) == 1.0;
    if (is_case) {
      CHECK(d.R()(i) == 1);
      CHECK(d.design_gr()(i) == 1.0);
      CHECK(d.C()(i) == 1);
    } else {
      ++non_case;
      non_case_sampled += d.R()(i);
      CHECK(d.design_gr()(i) == 0.25);
    }
    if (d.R()(i) == 1) {
      CHECK((d.S()(i) == 0.0 || d.S()(i) == 1.0 || d.S()(i) == 2.0));
    } else {
      CHECK(std::isnan(d.S()(i)));
    }
    w1_sum += d.W()(i, 0);
  }
  CHECK(w1_sum / d.n() == doctest::Approx(0.5).epsilon(0.03));
  CHECK(static_cast<double>(non_case_sampled) / non_case == doctest::Approx(0.25).epsilon(0.05));

  // Conditional rates against the generating law in one covariate cell.
  int n_cell = 0, a_cell = 0, c_cell = 0, cell_10 = 0;
  double cy_10 = 0;
  for (int i = 0; i < d.n(); ++i) {
    if (d.W()(i, 0) == 1.0 && d.W()(i, 1) == 0.0) {
      ++n_cell;
      a_cell += d.A()(i);
      c_cell += d.C()(i);
      if (d.A()(i) == 1) {
        ++cell_10;
        cy_10 += d.CY()(i);
      }
    }
  }
  CHECK(static_cast<double>(a_cell) / n_cell == doctest::Approx(expit(1.0)).epsilon(0.02));
  CHECK(static_cast<double>(c_cell) / n_cell == doctest::Approx(expit(2.5)).epsilon(0.02));
  const double p_s = expit(-1.0 + 0.25 + 0.5);
  double ecy = 0.0;
  for (int s = 0; s < 3; ++s) {
    const double qs = (s == 0   ? (1 - p_s) * (1 - p_s)
                       : s == 1 ? 2 * p_s * (1 - p_s)
                                : p_s * p_s);
    ecy += qs * expit(-2.0 + 0.5 + 0.5 - 0.5 * s);
  }
  ecy *= expit(2.5);
  CHECK(cy_10 / cell_10 == doctest::Approx(ecy).epsilon(0.08));
}

TEST_CASE("enumerated truth of the discrete process") {
  TruthRecord t = truth_dgp1();
  CHECK(t.method == TruthRecord::Method::enumeration);
  CHECK(t.psi10 == doctest::Approx(0.18731799050419068).epsilon(1e-12));
  CHECK(t.psi00 == doctest::Approx(0.12359043070404824).epsilon(1e-12));
  CHECK(t.psi11 == doctest::Approx(0.17276739741600292).epsilon(1e-12));
  CHECK(t.bound10 == doctest::Approx(0.5093387308362083).epsilon(1e-12));

  // The influence function has mean zero at the truth, and its two algebraic
  // forms agree on the variance bound.
  CHECK(t.max_abs_eif_mean < 1e-12);
  CHECK(t.bound10_alt == doctest::Approx(t.bound10).epsilon(1e-12));
  CHECK(std::isfinite(t.bound00));
  CHECK(std::isfinite(t.bound11));

  CHECK(t.ve == doctest::Approx(1.0 - t.psi11 / t.psi00).epsilon(1e-14));
  CHECK(t.indirect == doctest::Approx(t.psi11 / t.psi10).epsilon(1e-14));
  CHECK(t.direct == doctest::Approx(t.psi10 / t.psi00).epsilon(1e-14));
  const double pm_expected =
      1.0 - std::log(t.direct) / std::log(t.psi11 / t.psi00);
  CHECK(t.prop_mediated == doctest::Approx(pm_expected).epsilon(1e-14));
}

TEST_CASE("stratified subcohort of the trial-scale process") {
  Dgp2Spec spec;
  spec.n = 30000;
  spec.seed = 12;
  bool shortfall = true;
  Dataset d = gen_dgp2(spec, &shortfall);
  CHECK_FALSE(shortfall);
  REQUIRE(d.p() == 3);
  REQUIRE(d.has_design_gr());

  std::map<std::vector<int>, std::vector<int>> strata;
  int cases_v = 0, cases_p = 0, s_pos = 0, s_zero_v = 0;
  for (int i = 0; i < d.n(); ++i) {
    CHECK(d.C()(i) == 1);
    if (d.CY()(i) == 1.0) {
      CHECK(d.R()(i) == 1);
      CHECK(d.design_gr()(i) == 1.0);
      (d.A()(i) == 1 ? cases_v : cases_p)++;
    }
    if (d.R()(i) == 1) {
      CHECK(std::isfinite(d.S()(i)));
      CHECK(d.S()(i) >= 0.0);
      if (d.A()(i) == 0) CHECK(d.S()(i) == 0.0);
      if (d.A()(i) == 1 && d.S()(i) > 0.0) ++s_pos;
      if (d.A()(i) == 1 && d.S()(i) == 0.0) ++s_zero_v;
    } else {
      CHECK(std::isnan(d.S()(i)));
    }
    strata[{static_cast<int>(d.W()(i, 0)), static_cast<int>(d.W()(i, 1)),
            static_cast<int>(d.W()(i, 2)), d.A()(i)}]
        .push_back(i);
  }
  CHECK(s_pos > 0);
  CHECK(s_zero_v > 0);  // treated mediator has an atom at zero
  // event counts near their design expectations (alpha = -3.1)
  CHECK(cases_v > 40);
  CHECK(cases_v < 110);
  CHECK(cases_p > 750);
  CHECK(cases_p < 1020);

  REQUIRE(strata.size() == 16);
  for (const auto& [key, rows] : strata) {
    const int quota = key[3] == 1 ? 113 : 15;
    const int size = static_cast<int>(rows.size());
    const int take = std::min(quota, size);
    int sampled = 0, cases = 0;
    for (int i : rows) {
      sampled += d.R()(i);
      if (d.CY()(i) == 1.0)
        ++cases;
      else
        CHECK(d.design_gr()(i) == static_cast<double>(take) / size);
    }
    CHECK(sampled >= take);
    CHECK(sampled <= take + cases);
  }

  bool small_shortfall = false;
  Dgp2Spec tiny = spec;
  tiny.n = 500;  // strata smaller than the quota
  gen_dgp2(tiny, &small_shortfall);
  CHECK(small_shortfall);
}

TEST_CASE("monte carlo truth of the trial-scale process") {
  TruthRecord t = truth_dgp2(-3.1, 2000000);
  CHECK(t.method == TruthRecord::Method::monte_carlo);
  CHECK(t.draws == 2000000);
  CHECK(std::isnan(t.bound00));

  CHECK(std::abs(t.psi00 - 0.058900720768) < 5e-4);
  CHECK(std::abs(t.psi10 - 0.010305707478) < 2e-4);
  CHECK(std::abs(t.psi11 - 0.004754379638) < 1e-4);
  CHECK(std::abs(t.ve - 0.919281469292) < 5e-3);
  CHECK(std::abs(t.indirect - 0.461334619504) < 5e-3);
  CHECK(std::abs(t.direct - 0.174967425584) < 5e-3);
  CHECK(std::abs(t.prop_mediated - 0.307388591535) < 5e-3);

  // reported Monte Carlo errors cover the quadrature truth
  CHECK(t.mc_se_psi00 > 0);
  CHECK(std::abs(t.psi00 - 0.058900720768) < 6 * t.mc_se_psi00);
  CHECK(std::abs(t.ve - 0.919281469292) < 6 * t.mc_se_ve);
  CHECK(std::abs(t.prop_mediated - 0.307388591535) < 6 * t.mc_se_pm);

  TruthRecord t5 = truth_dgp2(-5.0, 2000000);
  CHECK(std::abs(t5.psi00 - 0.009335358643) < 2e-4);
  CHECK(std::abs(t5.ve - 0.923384180167) < 5e-3);
  CHECK(std::abs(t5.prop_mediated - 0.302780336588) < 8e-3);

  // seed-to-seed wobble matches the reported uncertainty
  TruthRecord a = truth_dgp2(-3.1, 500000, 101);
  TruthRecord b = truth_dgp2(-3.1, 500000, 202);
  CHECK(std::abs(a.psi00 - b.psi00) < 6 * (a.mc_se_psi00 + b.mc_se_psi00));
}
