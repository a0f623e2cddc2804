// scratch probe: gate measurements for the stochastic acceptance scenarios
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "natmed/replicate.hpp"

using namespace natmed;

static void print_rows(const ReplicationResult& res) {
  for (const auto& r : res.metrics)
    std::printf(
        "%-10s n=%-6d %-12s %-16s truth=%+.5f mean=%+.5f rnb=%+.4f rnse=%.4f "
        "cov=%.4f rat=%.4f msr=%.4f neg=%.4f used=%d undef=%d\n",
        r.setting.c_str(), r.n, r.estimator.c_str(), r.parameter.c_str(), r.truth, r.mean,
        r.root_n_bias, r.root_n_se, r.coverage, r.ratio_to_bound, r.median_se_ratio,
        r.negative_prop, r.used, r.undefined);
  std::printf("failures=%d\n", res.failures);
}

int main(int argc, char** argv) {
  const std::string what = argc > 1 ? argv[1] : "c7";
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;

  if (what == "c7") {
    ScenarioConfig sc;
    sc.label = "c7";
    sc.dgp = DgpKind::covid;
    sc.n = 30000;
    sc.reps = 100;
    sc.seed = seed;
    sc.alpha = -3.1;
    sc.strategy_preset = "dgp2-glm-main";
    sc.threads = 1;
    const ReplicationResult res = run_replications(sc);
    for (const auto& r : res.metrics)
      if (r.parameter == "psi10")
        std::printf("seed %llu %-12s psi10 neg=%.4f used=%d\n",
                    static_cast<unsigned long long>(seed), r.estimator.c_str(),
                    r.negative_prop, r.used);
    return 0;
  }

  if (what == "c6") {
    const double alpha = argc > 3 ? std::strtod(argv[3], nullptr) : -3.1;
    ScenarioConfig sc;
    sc.label = "c6";
    sc.dgp = DgpKind::covid;
    sc.n = 30000;
    sc.reps = 100;
    sc.seed = seed;
    sc.alpha = alpha;
    sc.strategy_preset = "dgp2-glm-inter";
    sc.threads = 1;
    print_rows(run_replications(sc));
    return 0;
  }

  if (what == "c6diag") {
    const double alpha = argc > 3 ? std::strtod(argv[3], nullptr) : -3.1;
    ScenarioConfig sc;
    sc.label = "c6";
    sc.dgp = DgpKind::covid;
    sc.n = 30000;
    sc.reps = 100;
    sc.seed = seed;
    sc.alpha = alpha;
    sc.strategy_preset = "dgp2-glm-inter";
    sc.threads = 1;
    const ReplicationResult res = run_replications(sc);
    const double z = 1.959963984540054;
    for (size_t v = 0; v < res.scenario.estimators.size(); ++v) {
      std::vector<double> e10, e11, se10, se11, lg, selg;
      for (const auto& rec : res.reps) {
        if (rec.failed) continue;
        const auto& r = rec.by_variant[v];
        if (!(r.psi10.est > 0) || !(r.psi11.est > 0) || !r.indirect.defined) continue;
        e10.push_back(r.psi10.est);
        e11.push_back(r.psi11.est);
        se10.push_back(r.psi10.se);
        se11.push_back(r.psi11.se);
        lg.push_back(std::log(r.indirect.value));
        selg.push_back((std::log(r.indirect.hi) - std::log(r.indirect.lo)) / (2 * z));
      }
      auto mean = [](const std::vector<double>& x) {
        double s = 0;
        for (double t : x) s += t;
        return s / static_cast<double>(x.size());
      };
      auto sdev = [&](const std::vector<double>& x) {
        const double m = mean(x);
        double s = 0;
        for (double t : x) s += (t - m) * (t - m);
        return std::sqrt(s / static_cast<double>(x.size() - 1));
      };
      const double m10 = mean(e10), m11 = mean(e11);
      double cov = 0;
      for (size_t k = 0; k < e10.size(); ++k) cov += (e10[k] - m10) * (e11[k] - m11);
      cov /= static_cast<double>(e10.size() - 1);
      const double corr_real = cov / (sdev(e10) * sdev(e11));
      // implied corr per rep from the log-SE identity, averaged
      double corr_imp = 0;
      for (size_t k = 0; k < lg.size(); ++k) {
        const double a = se11[k] / e11[k], b2 = se10[k] / e10[k];
        corr_imp += (a * a + b2 * b2 - selg[k] * selg[k]) / (2 * a * b2);
      }
      corr_imp /= static_cast<double>(lg.size());
      std::printf(
          "%s used=%zu sd10=%.5f meanse10=%.5f sd11=%.5f meanse11=%.5f sdlog=%.4f "
          "meanselog=%.4f corr_real=%.3f corr_impl=%.3f logbias=%+.4f\n",
          variant_label(res.scenario.estimators[v]).c_str(), lg.size(), sdev(e10),
          mean(se10), sdev(e11), mean(se11), sdev(lg), mean(selg), corr_real, corr_imp,
          mean(lg) - std::log(0.461334619504));
      std::vector<double> s10 = se10;
      std::sort(s10.begin(), s10.end());
      const double med = s10[s10.size() / 2];
      int tail = 0;
      for (const auto& rec : res.reps) {
        if (rec.failed) continue;
        const auto& r = rec.by_variant[v];
        if (r.psi10.se > 2 * med)
          std::printf("  tail rep %d se10=%.5f est10=%+.5f clip=%d irls=%d selog=%.3f\n",
                      rec.rep, r.psi10.se, r.psi10.est, r.clipped ? 1 : 0,
                      r.irls_fallback ? 1 : 0,
                      r.indirect.defined
                          ? (std::log(r.indirect.hi) - std::log(r.indirect.lo)) / (2 * z)
                          : -1.0,
                      ++tail);
      }
      std::printf("  tail_count=%d med_se10=%.5f\n", tail, med);
    }
    return 0;
  }

  if (what == "c6rep") {
    const int rep = argc > 3 ? std::atoi(argv[3]) : 0;
    const std::string preset = argc > 4 ? argv[4] : "dgp2-glm-inter";
    Dgp2Spec ds;
    ds.n = 30000;
    ds.alpha = -3.1;
    ds.seed = child_seed(seed, rep);
    const Dataset d = gen_dgp2(ds);
    const NuisanceStrategy ns = preset_strategy(preset);
    const TargetPair pair{1, 0};
    NuisanceBundle b;
    fit_gR(d, ns, &b);
    fit_phase1_nuisances(d, pair, ns, &b);
    fit_phase2_nuisances(d, pair, ns, &b);
    fit_alternative_second_stage(d, pair, ns, &b);
    const double plug = b.qtqt.mean();
    fit_eif_projection(d, partial_pseudo_outcome(d, b), PseudoKind::partial, ns, &b);
    EifColumn col = eval_alternative(d, b, plug);
    // scan
    double max_ratio = 0, max_eif = 0;
    int idx_r = -1, idx_e = -1;
    int s0_case = 0;
    for (int i = 0; i < d.n(); ++i) {
      if (d.R()(i) == 1 && std::fabs(b.aws_ratio(i)) > max_ratio) {
        max_ratio = std::fabs(b.aws_ratio(i));
        idx_r = i;
      }
      if (std::fabs(col.values(i)) > max_eif) {
        max_eif = std::fabs(col.values(i));
        idx_e = i;
      }
      if (d.R()(i) == 1 && d.A()(i) == 1 && d.S()(i) == 0.0 && d.CY()(i) == 1.0) ++s0_case;
    }
    std::printf("rep %d: max|aws_ratio|=%.2f at i=%d (w=%g,%g,%g a=%d s=%g cy=%g gr=%.4f)\n",
                rep, max_ratio, idx_r, d.W()(idx_r, 0), d.W()(idx_r, 1), d.W()(idx_r, 2),
                d.A()(idx_r), d.S()(idx_r), d.CY()(idx_r), b.gr(idx_r));
    std::printf("       max|eif|=%.2f at i=%d (w=%g,%g,%g a=%d s=%g cy=%g gr=%.4f ratio=%.2f "
                "qy=%.4f)\n",
                max_eif, idx_e, d.W()(idx_e, 0), d.W()(idx_e, 1), d.W()(idx_e, 2), d.A()(idx_e),
                d.R()(idx_e) == 1 ? d.S()(idx_e) : -9, d.CY()(idx_e), b.gr(idx_e),
                b.aws_ratio(idx_e), b.qy(idx_e));
    std::printf("       vaccine zero-titer cases sampled: %d  clipped=%d irls=%d\n", s0_case,
                b.clipped_nuisance ? 1 : 0, b.irls_fallback ? 1 : 0);
    // distribution of aws_ratio on vaccine case rows (the T1 support)
    std::vector<double> ratios;
    for (int i = 0; i < d.n(); ++i)
      if (d.R()(i) == 1 && d.A()(i) == 1 && d.CY()(i) == 1.0)
        ratios.push_back(b.aws_ratio(i));
    std::sort(ratios.begin(), ratios.end());
    std::printf("       case-row ratio quantiles: min=%.3f med=%.3f p90=%.2f max=%.2f (m=%zu)\n",
                ratios.front(), ratios[ratios.size() / 2], ratios[ratios.size() * 9 / 10],
                ratios.back(), ratios.size());
    const double se = std::sqrt((col.values - col.values.mean()).square().mean() / d.n());
    std::printf("       est=%.5f se=%.5f\n", plug + col.values.mean(), se);
    {
      const int i = idx_e;
      const double r = d.R()(i) == 1 ? 1.0 : 0.0;
      std::printf("       row %d terms: qtqt-plug=%+.4f qtdterm=%+.4f qtd=%+.4f\n", i,
                  b.qtqt(i) - plug, -b.qtd(i) / b.gr(i) * (r - b.gr(i)), b.qtd(i));
      // support-cell mean of the pseudo-outcome at this row's (W, CY) cell
      const Eigen::ArrayXd pseudo = partial_pseudo_outcome(d, b);
      double s0 = 0;
      int m0 = 0;
      for (int k = 0; k < d.n(); ++k)
        if (d.R()(k) == 1 && d.A()(k) == 1 && d.C()(k) == 1 && d.CY()(k) == d.CY()(i) &&
            d.W()(k, 0) == d.W()(i, 0) && d.W()(k, 1) == d.W()(i, 1) &&
            d.W()(k, 2) == d.W()(i, 2)) {
          s0 += pseudo(k);
          ++m0;
        }
      std::printf("       support cell mean=%+.4f over %d rows\n", m0 ? s0 / m0 : 0.0, m0);
    }
    return 0;
  }

  if (what == "c3") {
    ScenarioConfig sc;
    sc.label = "c3";
    sc.dgp = DgpKind::discrete;
    sc.n = 4000;
    sc.reps = 300;
    sc.seed = seed;
    sc.strategy_preset = "dgp1-all";
    sc.threads = 1;
    print_rows(run_replications(sc));
    return 0;
  }

  if (what == "c4") {
    for (int n : {500, 4000}) {
      ScenarioConfig sc;
      sc.label = "c4";
      sc.dgp = DgpKind::discrete;
      sc.n = n;
      sc.reps = 300;
      sc.seed = seed;
      sc.strategy_preset = "dgp1-qy-qqy";
      sc.threads = 1;
      print_rows(run_replications(sc));
    }
    return 0;
  }

  if (what == "c8") {
    ScenarioConfig sc;
    sc.label = "c8";
    sc.dgp = DgpKind::discrete;
    sc.n = 2000;
    sc.reps = 100;
    sc.seed = seed;
    sc.strategy_preset = "dgp1-saturated";
    sc.estimators = {Variant::alternative, Variant::density_ratio};
    sc.threads = 1;
    const ReplicationResult res = run_replications(sc);
    double max_plug = 0.0, max_est = 0.0;
    int worst = -1;
    for (const auto& rec : res.reps) {
      if (rec.failed) continue;
      const double dp = std::fabs(rec.by_variant[0].psi10.plug - rec.by_variant[1].psi10.plug);
      const double de = std::fabs(rec.by_variant[0].psi10.est - rec.by_variant[1].psi10.est);
      if (dp > max_plug) {
        max_plug = dp;
        worst = rec.rep;
      }
      if (de > max_est) max_est = de;
    }
    std::printf("seed %llu max_plug_diff=%.3e (rep %d) max_est_diff=%.3e\n",
                static_cast<unsigned long long>(seed), max_plug, worst, max_est);
    print_rows(res);
    return 0;
  }

  std::fprintf(stderr, "unknown mode %s\n", what.c_str());
  return 2;
}
