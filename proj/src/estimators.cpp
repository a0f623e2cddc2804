#include "natmed/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <vector>

#include "natmed/regress.hpp"

namespace natmed {

namespace {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::classic: return "classic";
    case Variant::alternative: return "alternative";
    case Variant::density_ratio: return "density_ratio";
  }
  return "?";
}

// Outcome-fit resolution, mirroring the nuisance module: cell-mean and
// constant fits use the identity link so degenerate outcomes stay exact.
LearnerSpec outcome_spec(const NuisanceChoice& choice) {
  LearnerSpec spec =
      choice.mode == NuisanceMode::intercept_only
          ? LearnerSpec{LearnerKind::intercept_only, Link::identity, {}, choice.learner.cv_folds}
          : choice.learner;
  auto adjust = [](LearnerSpec& m) {
    if (m.kind == LearnerKind::saturated || m.kind == LearnerKind::intercept_only)
      m.link = Link::identity;
  };
  adjust(spec);
  for (auto& m : spec.ensemble_members) adjust(m);
  return spec;
}

// Mediator-frequency reconstruction of the outcome regression: for every
// mediator support point, the frequency given (W, Y) is fit among sampled
// uncensored a1-arm rows, projected onto W with and without the outcome
// factor over every uncensored a1-arm row (both phases, unweighted), and the
// two projections' ratio replaces the inverse-weighted fit.
void ratio_outcome(const Dataset& d, TargetPair pair, const NuisanceStrategy& s,
                   NuisanceBundle* b) {
  std::vector<double> support;
  for (int i = 0; i < d.n(); ++i)
    if (d.R()(i) == 1) support.push_back(d.S()(i));
  std::sort(support.begin(), support.end());
  support.erase(std::unique(support.begin(), support.end()), support.end());
  if (support.size() > 20)
    throw ConfigError("mediator support too large for the ratio path (" +
                      std::to_string(support.size()) + " values, limit 20)");

  std::vector<int> fit_rows, eval_rows;
  for (int i = 0; i < d.n(); ++i) {
    if (d.A()(i) != pair.a1 || d.C()(i) != 1) continue;
    eval_rows.push_back(i);
    if (d.R()(i) == 1) fit_rows.push_back(i);
  }
  if (fit_rows.empty())
    throw InestimableError("no phase-two rows with A=" + std::to_string(pair.a1) +
                           " and C=1");

  auto gather = [&](const std::vector<int>& rows, bool with_outcome) {
    Eigen::MatrixXd X(static_cast<int>(rows.size()), d.p() + (with_outcome ? 1 : 0));
    for (int k = 0; k < X.rows(); ++k) {
      const int i = rows[static_cast<size_t>(k)];
      X.row(k).head(d.p()) = d.W().row(i);
      if (with_outcome) X(k, d.p()) = d.CY()(i);
    }
    return X;
  };
  const Eigen::MatrixXd Xq_fit = gather(fit_rows, true);
  const Eigen::MatrixXd Xq_eval = gather(eval_rows, true);
  const Eigen::MatrixXd Xw_eval = gather(eval_rows, false);
  const Eigen::VectorXd ones_fit = Eigen::VectorXd::Ones(static_cast<int>(fit_rows.size()));
  const Eigen::VectorXd ones_eval = Eigen::VectorXd::Ones(static_cast<int>(eval_rows.size()));
  const LearnerSpec spec = outcome_spec(s.qy);

  Eigen::ArrayXd num = Eigen::ArrayXd::Zero(d.n()), den = Eigen::ArrayXd::Zero(d.n());
  for (double sv : support) {
    Eigen::VectorXd ind(static_cast<int>(fit_rows.size()));
    for (int k = 0; k < ind.size(); ++k)
      ind(k) = d.S()(fit_rows[static_cast<size_t>(k)]) == sv ? 1.0 : 0.0;
    FittedRegression freq = fit(spec, {Xq_fit, ind, ones_fit}, 0.0);
    const Eigen::VectorXd q_eval = freq.predict(Xq_eval);

    Eigen::VectorXd yq(q_eval.size());
    for (int k = 0; k < yq.size(); ++k)
      yq(k) = d.CY()(eval_rows[static_cast<size_t>(k)]) * q_eval(k);
    FittedRegression top = fit(spec, {Xw_eval, yq, ones_eval}, 0.0);
    FittedRegression bottom = fit(spec, {Xw_eval, q_eval, ones_eval}, 0.0);

    const Eigen::VectorXd top_all = top.predict(d.W());
    const Eigen::VectorXd bottom_all = bottom.predict(d.W());
    for (int i = 0; i < d.n(); ++i)
      if (d.R()(i) == 1 && d.S()(i) == sv) {
        num(i) = top_all(i);
        den(i) = bottom_all(i);
      }
  }

  // Cell-mean outcome fits revert to their weighted global mean on (W, S)
  // combinations absent from the fit rows; mirror that policy here so both
  // constructions extrapolate identically on such rows.
  std::set<std::vector<long long>> seen;
  double fallback = std::numeric_limits<double>::quiet_NaN();
  const bool cell_fallback = spec.kind == LearnerKind::saturated;
  if (cell_fallback) {
    double tw = 0.0, twy = 0.0;
    for (int i : fit_rows) {
      std::vector<long long> key(d.p() + 1);
      for (int j = 0; j < d.p(); ++j) key[static_cast<size_t>(j)] = std::llround(d.W()(i, j));
      key[static_cast<size_t>(d.p())] = std::llround(d.S()(i));
      seen.insert(std::move(key));
      const double w = 1.0 / b->gr(i);
      tw += w;
      twy += w * d.CY()(i);
    }
    fallback = twy / tw;
  }

  int clipped = 0;
  b->qy = Eigen::ArrayXd::Zero(d.n());
  for (int i = 0; i < d.n(); ++i)
    if (d.R()(i) == 1) {
      if (cell_fallback) {
        std::vector<long long> key(d.p() + 1);
        for (int j = 0; j < d.p(); ++j)
          key[static_cast<size_t>(j)] = std::llround(d.W()(i, j));
        key[static_cast<size_t>(d.p())] = std::llround(d.S()(i));
        if (seen.find(key) == seen.end()) {
          b->qy(i) = fallback;
          continue;
        }
      }
      double dn = den(i);
      if (dn < s.p_min) {
        dn = s.p_min;
        ++clipped;
      }
      b->qy(i) = num(i) / dn;
    }
  b->clipped_nuisance |= clipped > 0;
  b->provenance.push_back("QY: mediator-frequency ratio (" +
                          std::to_string(support.size()) + " support points)");
}

void finish(PsiEstimate* e) {
  const double corr = e->eif.values.mean();
  e->one_step = e->plug_in + corr;
  e->variance_n = (e->eif.values - corr).square().mean();
  e->negative_estimate = e->one_step < 0.0;
}

}  // namespace

PsiEstimate estimate_psi(const Dataset& d, TargetPair pair, const NuisanceStrategy& s,
                         Variant variant) {
  NuisanceBundle b;
  fit_gR(d, s, &b);
  fit_phase1_nuisances(d, pair, s, &b);
  fit_phase2_nuisances(d, pair, s, &b);

  PsiEstimate e;
  e.pair = pair;
  e.variant = variant;
  if (variant == Variant::classic) {
    fit_classic_second_stage(d, pair, s, &b);
    e.plug_in = b.qqy.mean();
    fit_eif_projection(d, eval_full_data(d, b, e.plug_in), PseudoKind::full, s, &b);
    e.eif = eval_classic(d, b, e.plug_in);
  } else {
    if (variant == Variant::density_ratio && s.qy.mode != NuisanceMode::known)
      ratio_outcome(d, pair, s, &b);
    fit_alternative_second_stage(d, pair, s, &b);
    e.plug_in = b.qtqt.mean();
    fit_eif_projection(d, partial_pseudo_outcome(d, b), PseudoKind::partial, s, &b);
    e.eif = eval_alternative(d, b, e.plug_in);
  }
  finish(&e);
  e.clipped_nuisance = b.clipped_nuisance;
  e.irls_fallback = b.irls_fallback;
  return e;
}

PsiEstimate estimate_psi_classic(const Dataset& d, TargetPair pair,
                                 const NuisanceStrategy& s) {
  return estimate_psi(d, pair, s, Variant::classic);
}

PsiEstimate estimate_psi_alternative(const Dataset& d, TargetPair pair,
                                     const NuisanceStrategy& s) {
  return estimate_psi(d, pair, s, Variant::alternative);
}

PsiEstimate estimate_psi_density_ratio(const Dataset& d, TargetPair pair,
                                       const NuisanceStrategy& s) {
  return estimate_psi(d, pair, s, Variant::density_ratio);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("quantile level must be in (0,1)");
  // Acklam's rational approximation.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double bb[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00, 2.938163982698783e+00};
  static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) return -normal_quantile(1.0 - p);
  const double q = p - 0.5, r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((bb[0] * r + bb[1]) * r + bb[2]) * r + bb[3]) * r + bb[4]) * r + 1.0);
}

ValueCI psi_interval(const PsiEstimate& e, double ci_level) {
  ValueCI ci;
  ci.value = e.one_step;
  const int n = static_cast<int>(e.eif.values.size());
  if (n == 0 || !std::isfinite(e.variance_n)) return ci;
  const double z = normal_quantile(0.5 + ci_level / 2.0);
  const double se = std::sqrt(e.variance_n / n);
  ci.lo = e.one_step - z * se;
  ci.hi = e.one_step + z * se;
  ci.defined = true;
  return ci;
}

EffectReport effect_report(const Dataset& d, const NuisanceStrategy& s, Variant variant,
                           double ci_level, bool include_psi01) {
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw ConfigError("ci level must be in (0,1)");
  EffectReport r;
  r.variant = variant;
  r.ci_level = ci_level;
  r.n = d.n();
  r.psi00 = estimate_psi(d, {0, 0}, s, variant);
  r.psi10 = estimate_psi(d, {1, 0}, s, variant);
  r.psi11 = estimate_psi(d, {1, 1}, s, variant);
  if (include_psi01) {
    r.psi01 = estimate_psi(d, {0, 1}, s, variant);
    r.has_psi01 = true;
  }

  const PsiEstimate* est[3] = {&r.psi00, &r.psi10, &r.psi11};
  const double n = static_cast<double>(r.n);
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      const Eigen::ArrayXd& vi = est[i]->eif.values;
      const Eigen::ArrayXd& vj = est[j]->eif.values;
      const double cov = ((vi - vi.mean()) * (vj - vj.mean())).mean() / n;
      r.covariance(i, j) = cov;
      r.covariance(j, i) = cov;
    }

  const double x[3] = {r.psi00.one_step, r.psi10.one_step, r.psi11.one_step};
  const double z = normal_quantile(0.5 + ci_level / 2.0);

  // Ratio x[num]/x[den] with a log-scale Wald interval.
  auto ratio_ci = [&](int num, int den) {
    ValueCI ci;
    if (!(x[num] > 0.0) || !(x[den] > 0.0)) return ci;
    const double rr = x[num] / x[den];
    const double var_log = r.covariance(num, num) / (x[num] * x[num]) +
                           r.covariance(den, den) / (x[den] * x[den]) -
                           2.0 * r.covariance(num, den) / (x[num] * x[den]);
    ci.value = rr;
    if (var_log >= 0.0) {
      const double h = z * std::sqrt(var_log);
      ci.lo = rr * std::exp(-h);
      ci.hi = rr * std::exp(h);
      ci.defined = true;
    }
    return ci;
  };

  r.indirect = ratio_ci(2, 1);
  r.direct = ratio_ci(1, 0);
  ValueCI total = ratio_ci(2, 0);
  if (total.defined) {
    r.vaccine_efficacy = {1.0 - total.value, 1.0 - total.hi, 1.0 - total.lo, true};
  }

  if (x[0] > 0.0 && x[1] > 0.0 && x[2] > 0.0) {
    const double num = std::log(x[1] / x[0]);
    const double den = std::log(x[2] / x[0]);
    if (std::abs(den) > 1e-12) {
      r.prop_mediated.value = 1.0 - num / den;
      const Eigen::Vector3d g((den - num) / (x[0] * den * den), -1.0 / (x[1] * den),
                              num / (den * den * x[2]));
      const double var = g.dot(r.covariance * g);
      if (var >= 0.0) {
        const double h = z * std::sqrt(var);
        r.prop_mediated.lo = r.prop_mediated.value - h;
        r.prop_mediated.hi = r.prop_mediated.value + h;
        r.prop_mediated.defined = true;
      }
    }
    if (std::abs(den) < 1e-8 || x[0] < s.p_min || x[1] < s.p_min || x[2] < s.p_min)
      r.unstable_log = true;
  }

  for (const PsiEstimate* e : est) {
    r.negative_estimate |= e->negative_estimate;
    r.clipped_nuisance |= e->clipped_nuisance;
    r.irls_fallback |= e->irls_fallback;
  }
  if (r.has_psi01) {
    r.negative_estimate |= r.psi01.negative_estimate;
    r.clipped_nuisance |= r.psi01.clipped_nuisance;
    r.irls_fallback |= r.psi01.irls_fallback;
  }
  return r;
}

namespace {

std::string flag_list(const EffectReport& r) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ";";
    out += name;
  };
  add(r.negative_estimate, "negative_estimate");
  add(r.clipped_nuisance, "clipped_nuisance");
  add(r.irls_fallback, "irls_fallback");
  add(r.unstable_log, "unstable_log");
  return out;
}

void append_ci(std::string* s, const char* label, const ValueCI& ci) {
  char buf[160];
  if (ci.defined)
    std::snprintf(buf, sizeof(buf), "  %-20s %9.4f  [%9.4f, %9.4f]\n", label, ci.value,
                  ci.lo, ci.hi);
  else
    std::snprintf(buf, sizeof(buf), "  %-20s undefined\n", label);
  *s += buf;
}

}  // namespace

std::string format_report(const EffectReport& r) {
  std::string out;
  char buf[200];
  std::snprintf(buf, sizeof(buf), "one-step estimates [%s], n = %d, %.0f%% intervals\n",
                variant_name(r.variant), r.n, 100.0 * r.ci_level);
  out += buf;
  auto psi_line = [&](const char* label, const PsiEstimate& e) {
    const ValueCI ci = psi_interval(e, r.ci_level);
    std::snprintf(buf, sizeof(buf),
                  "  %s  plug-in %10.6f   one-step %10.6f   se %9.6f   [%9.6f, %9.6f]\n",
                  label, e.plug_in, e.one_step,
                  std::sqrt(e.variance_n / std::max(r.n, 1)), ci.lo, ci.hi);
    out += buf;
  };
  psi_line("psi(0,0)", r.psi00);
  psi_line("psi(1,0)", r.psi10);
  psi_line("psi(1,1)", r.psi11);
  if (r.has_psi01) psi_line("psi(0,1)", r.psi01);
  out += "contrasts\n";
  append_ci(&out, "vaccine efficacy", r.vaccine_efficacy);
  append_ci(&out, "indirect effect", r.indirect);
  append_ci(&out, "direct effect", r.direct);
  append_ci(&out, "proportion mediated", r.prop_mediated);
  const std::string flags = flag_list(r);
  out += "flags: " + (flags.empty() ? "none" : flags) + "\n";
  return out;
}

std::string report_csv_header() {
  return "variant,n,ci_level,"
         "psi00_plug,psi00,psi00_var,psi10_plug,psi10,psi10_var,psi11_plug,psi11,psi11_var,"
         "ve,ve_lo,ve_hi,indirect,indirect_lo,indirect_hi,"
         "direct,direct_lo,direct_hi,pm,pm_lo,pm_hi,flags";
}

std::string report_csv_row(const EffectReport& r) {
  char buf[1024];
  auto ci3 = [](const ValueCI& c, char* out, size_t cap) {
    std::snprintf(out, cap, "%.17g,%.17g,%.17g", c.value, c.lo, c.hi);
  };
  char ve[120], ind[120], dir[120], pm[120];
  ci3(r.vaccine_efficacy, ve, sizeof(ve));
  ci3(r.indirect, ind, sizeof(ind));
  ci3(r.direct, dir, sizeof(dir));
  ci3(r.prop_mediated, pm, sizeof(pm));
  std::snprintf(buf, sizeof(buf),
                "%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                "%s,%s,%s,%s",
                variant_name(r.variant), r.n, r.ci_level, r.psi00.plug_in, r.psi00.one_step,
                r.psi00.variance_n, r.psi10.plug_in, r.psi10.one_step, r.psi10.variance_n,
                r.psi11.plug_in, r.psi11.one_step, r.psi11.variance_n, ve, ind, dir, pm);
  std::string out(buf);
  out += "," + flag_list(r);
  return out;
}

void write_report_csv(const std::string& path, const EffectReport& r) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  std::fprintf(f, "%s\n%s\n", report_csv_header().c_str(), report_csv_row(r).c_str());
  if (std::fclose(f) != 0) throw std::runtime_error("failed to write " + path);
}

}  // namespace natmed
