#include "natmed/nuisance.hpp"

#include <cmath>
#include <functional>
#include <utility>

namespace natmed {

namespace {

void check_pair(TargetPair pair) {
  if ((pair.a1 != 0 && pair.a1 != 1) || (pair.a2 != 0 && pair.a2 != 1))
    throw ConfigError("target arms must be 0 or 1");
}

std::vector<int> rows_where(const Dataset& d, const std::function<bool(int)>& pred) {
  std::vector<int> rows;
  for (int i = 0; i < d.n(); ++i)
    if (pred(i)) rows.push_back(i);
  return rows;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<int>(rows.size()), X.cols());
  for (int i = 0; i < out.rows(); ++i) out.row(i) = X.row(rows[static_cast<size_t>(i)]);
  return out;
}

Eigen::VectorXd take(const Eigen::ArrayXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<int>(rows.size()));
  for (int i = 0; i < out.size(); ++i) out(i) = v(rows[static_cast<size_t>(i)]);
  return out;
}

// [W, S]; the mediator column is only valid on phase-two rows, so callers
// must restrict to those before fitting or predicting.
Eigen::MatrixXd design_ws(const Dataset& d) {
  Eigen::MatrixXd X(d.n(), d.p() + 1);
  X.leftCols(d.p()) = d.W();
  X.col(d.p()) = d.S().matrix();
  return X;
}

// [W, A, survivor dummy, case dummy]
Eigen::MatrixXd design_v(const Dataset& d) {
  Eigen::MatrixXd X(d.n(), d.p() + 3);
  X.leftCols(d.p()) = d.W();
  X.col(d.p()) = d.A().cast<double>().matrix();
  X.rightCols(2) = d.category_dummies();
  return X;
}

std::string kind_name(const LearnerSpec& spec) {
  switch (spec.kind) {
    case LearnerKind::intercept_only: return "intercept_only";
    case LearnerKind::glm_main_terms: return "glm_main_terms";
    case LearnerKind::glm_all_interactions: return "glm_all_interactions";
    case LearnerKind::saturated: return "saturated";
    case LearnerKind::ensemble:
      return "ensemble(" + std::to_string(spec.ensemble_members.size()) + ")";
  }
  return "?";
}

// Denominator fits stay on the logit scale so predictions clip away from
// {0,1}; outcome fits keep cell means and constants exact by switching the
// non-GLM kinds to the identity link and clip only into [0,1].
LearnerSpec resolve(const NuisanceChoice& choice, bool denominator) {
  LearnerSpec spec =
      choice.mode == NuisanceMode::intercept_only
          ? LearnerSpec{LearnerKind::intercept_only, Link::logit, {}, choice.learner.cv_folds}
          : choice.learner;
  auto adjust = [&](LearnerSpec& s) {
    if (denominator)
      s.link = Link::logit;
    else if (s.kind == LearnerKind::saturated || s.kind == LearnerKind::intercept_only)
      s.link = Link::identity;
  };
  adjust(spec);
  for (auto& m : spec.ensemble_members) adjust(m);
  return spec;
}

struct FitOut {
  FittedRegression model;
  Eigen::ArrayXd values;  // one per evaluation row
};

FitOut fit_eval(const LearnerSpec& spec, const WeightedSample& sample,
                const Eigen::MatrixXd& X_eval, double p_min, NuisanceBundle* b,
                const std::string& label) {
  FittedRegression fr = fit(spec, sample, p_min);
  PredictInfo info;
  Eigen::VectorXd pred = fr.predict(X_eval, &info);
  b->clipped_nuisance |= info.clipped > 0;
  b->irls_fallback |= fr.irls_fallback() || fr.dropped_member();
  b->provenance.push_back(label + ": " + kind_name(spec));
  return {std::move(fr), pred.array()};
}

double checked_known(const NuisanceChoice& c, double lo, double hi, const char* what) {
  const double v = c.known_value;
  if (!std::isfinite(v) || v < lo || v > hi)
    throw ConfigError(std::string(what) + ": known value outside [" + std::to_string(lo) +
                      ", " + std::to_string(hi) + "]");
  return v;
}

}  // namespace

void fit_gR(const Dataset& d, const NuisanceStrategy& s, NuisanceBundle* b) {
  const NuisanceChoice& c = s.gr;
  b->p_min = s.p_min;
  if (c.mode == NuisanceMode::known) {
    if (c.from_design) {
      if (!d.has_design_gr())
        throw ConfigError("sampling probabilities requested from the design, "
                          "but the dataset carries none");
      b->gr = d.design_gr();
      b->provenance.push_back("gR: design");
      return;
    }
    b->gr = Eigen::ArrayXd::Constant(d.n(), checked_known(c, 1e-12, 1.0, "gR"));
    b->provenance.push_back("gR: known");
    return;
  }

  if ((d.R() == 1).all()) {  // fully observed: nothing to estimate
    b->gr = Eigen::ArrayXd::Ones(d.n());
    b->provenance.push_back("gR: complete phase two");
    return;
  }

  const CaseCohortCheck audit = validate_case_cohort(d);
  const Eigen::MatrixXd V = design_v(d);
  std::vector<int> fit_rows =
      audit.all_cases_sampled
          ? rows_where(d, [&](int i) { return d.CY()(i) == 0.0; })
          : rows_where(d, [](int) { return true; });
  if (fit_rows.empty()) {  // every row is a sampled case
    b->gr = Eigen::ArrayXd::Ones(d.n());
    b->provenance.push_back("gR: all cases");
    return;
  }
  WeightedSample sample{take_rows(V, fit_rows), take(d.R().cast<double>(), fit_rows),
                        Eigen::VectorXd::Ones(static_cast<int>(fit_rows.size()))};
  FitOut out = fit_eval(resolve(c, true), sample, V, s.p_min, b, "gR");
  b->gr = out.values;
  if (audit.all_cases_sampled)
    for (int i = 0; i < d.n(); ++i)
      if (d.CY()(i) != 0.0) b->gr(i) = 1.0;
}

void fit_phase1_nuisances(const Dataset& d, TargetPair pair, const NuisanceStrategy& s,
                          NuisanceBundle* b) {
  check_pair(pair);
  b->pair = pair;
  b->p_min = s.p_min;

  int n_a1 = 0, n_a2 = 0;
  for (int i = 0; i < d.n(); ++i) (d.A()(i) == pair.a1 ? n_a1 : n_a2)++;
  if (n_a1 == 0)
    throw InestimableError("no rows in arm a1=" + std::to_string(pair.a1));
  if (pair.a1 != pair.a2 && n_a2 == 0)
    throw InestimableError("no rows in arm a2=" + std::to_string(pair.a2));

  if (s.ga.mode == NuisanceMode::known) {
    const double v = checked_known(s.ga, 1e-12, 1.0 - 1e-12, "gA");
    b->ga2 = Eigen::ArrayXd::Constant(d.n(), pair.a2 == 1 ? v : 1.0 - v);
    b->provenance.push_back("gA: known");
  } else {
    WeightedSample sample{d.W(), d.A().cast<double>(), Eigen::VectorXd::Ones(d.n())};
    FitOut out = fit_eval(resolve(s.ga, true), sample, d.W(), s.p_min, b, "gA");
    b->ga2 = pair.a2 == 1 ? out.values : (1.0 - out.values);
  }

  if (s.gc.mode == NuisanceMode::known) {
    b->gc1 = Eigen::ArrayXd::Constant(d.n(), checked_known(s.gc, 1e-12, 1.0, "gC"));
    b->provenance.push_back("gC: known");
  } else {
    const std::vector<int> rows = rows_where(d, [&](int i) { return d.A()(i) == pair.a1; });
    WeightedSample sample{take_rows(d.W(), rows), take(d.C().cast<double>(), rows),
                          Eigen::VectorXd::Ones(static_cast<int>(rows.size()))};
    FitOut out = fit_eval(resolve(s.gc, true), sample, d.W(), s.p_min, b, "gC");
    b->gc1 = out.values;
  }
}

void fit_phase2_nuisances(const Dataset& d, TargetPair pair, const NuisanceStrategy& s,
                          NuisanceBundle* b) {
  check_pair(pair);
  if (b->gr.size() != d.n()) throw ConfigError("sampling probabilities must be fit first");
  const Eigen::MatrixXd WS = design_ws(d);
  const std::vector<int> phase2 = rows_where(d, [&](int i) { return d.R()(i) == 1; });
  if (phase2.empty()) throw InestimableError("no phase-two rows");
  const Eigen::MatrixXd WS2 = take_rows(WS, phase2);

  {  // outcome regression under arm a1
    const std::vector<int> rows = rows_where(
        d, [&](int i) { return d.R()(i) == 1 && d.A()(i) == pair.a1 && d.C()(i) == 1; });
    if (rows.empty())
      throw InestimableError("no phase-two rows with A=" + std::to_string(pair.a1) +
                             " and C=1");
    b->qy = Eigen::ArrayXd::Zero(d.n());
    if (s.qy.mode == NuisanceMode::known) {
      const double v = s.qy.known_value;
      if (!std::isfinite(v)) throw ConfigError("QY: known value not finite");
      for (int i : phase2) b->qy(i) = v;
      b->provenance.push_back("QY: known");
    } else {
      WeightedSample sample{take_rows(WS, rows), take(d.CY(), rows),
                            take(b->gr, rows).cwiseInverse()};
      FitOut out = fit_eval(resolve(s.qy, false), sample, WS2, 0.0, b, "QY");
      for (size_t k = 0; k < phase2.size(); ++k) b->qy(phase2[k]) = out.values(static_cast<int>(k));
    }
  }

  b->aws_ratio = Eigen::ArrayXd::Zero(d.n());
  if (pair.a1 == pair.a2) {
    for (int i : phase2) b->aws_ratio(i) = 1.0;
    b->aws_skipped = true;
    b->provenance.push_back("gAWS: skipped (a1 == a2)");
    return;
  }
  if (s.gaws.mode == NuisanceMode::known) {
    const double p1 = checked_known(s.gaws, 1e-12, 1.0 - 1e-12, "gAWS");
    const double ratio = (pair.a2 == 1 ? p1 : 1.0 - p1) / (pair.a1 == 1 ? p1 : 1.0 - p1);
    for (int i : phase2) b->aws_ratio(i) = ratio;
    b->provenance.push_back("gAWS: known");
    return;
  }
  WeightedSample sample{WS2, take(d.A().cast<double>(), phase2),
                        take(b->gr, phase2).cwiseInverse()};
  FitOut out = fit_eval(resolve(s.gaws, true), sample, WS2, s.p_min, b, "gAWS");
  for (size_t k = 0; k < phase2.size(); ++k) {
    const double p1 = out.values(static_cast<int>(k));
    b->aws_ratio(phase2[k]) =
        (pair.a2 == 1 ? p1 : 1.0 - p1) / (pair.a1 == 1 ? p1 : 1.0 - p1);
  }
}

void fit_classic_second_stage(const Dataset& d, TargetPair pair, const NuisanceStrategy& s,
                              NuisanceBundle* b) {
  check_pair(pair);
  if (b->qy.size() != d.n() || b->gr.size() != d.n())
    throw ConfigError("outcome regression and sampling probabilities must be fit first");
  const std::vector<int> rows =
      rows_where(d, [&](int i) { return d.R()(i) == 1 && d.A()(i) == pair.a2; });
  if (rows.empty())
    throw InestimableError("no phase-two rows with A=" + std::to_string(pair.a2));
  if (s.qqy.mode == NuisanceMode::known) {
    const double v = s.qqy.known_value;
    if (!std::isfinite(v)) throw ConfigError("QQY: known value not finite");
    b->qqy = Eigen::ArrayXd::Constant(d.n(), v);
    b->provenance.push_back("QQY: known");
    return;
  }
  WeightedSample sample{take_rows(d.W(), rows), take(b->qy, rows),
                        take(b->gr, rows).cwiseInverse()};
  FitOut out = fit_eval(resolve(s.qqy, false), sample, d.W(), 0.0, b, "QQY");
  b->qqy = out.values;
}

void fit_alternative_second_stage(const Dataset& d, TargetPair pair,
                                  const NuisanceStrategy& s, NuisanceBundle* b) {
  check_pair(pair);
  if (b->qy.size() != d.n()) throw ConfigError("outcome regression must be fit first");
  const Eigen::MatrixXd V = design_v(d);
  const std::vector<int> phase2 = rows_where(d, [&](int i) { return d.R()(i) == 1; });
  if (phase2.empty()) throw InestimableError("no phase-two rows");

  if (s.qtqy.mode == NuisanceMode::known) {
    const double v = s.qtqy.known_value;
    if (!std::isfinite(v)) throw ConfigError("QtQY: known value not finite");
    b->qtqy = Eigen::ArrayXd::Constant(d.n(), v);
    b->provenance.push_back("QtQY: known");
  } else {
    WeightedSample sample{take_rows(V, phase2), take(b->qy, phase2),
                          Eigen::VectorXd::Ones(static_cast<int>(phase2.size()))};
    FitOut out = fit_eval(resolve(s.qtqy, false), sample, V, 0.0, b, "QtQY");
    b->qtqy = out.values;
  }

  const std::vector<int> arm2 = rows_where(d, [&](int i) { return d.A()(i) == pair.a2; });
  if (arm2.empty()) throw InestimableError("no rows in arm a2=" + std::to_string(pair.a2));
  if (s.qtqt.mode == NuisanceMode::known) {
    const double v = s.qtqt.known_value;
    if (!std::isfinite(v)) throw ConfigError("QtQt: known value not finite");
    b->qtqt = Eigen::ArrayXd::Constant(d.n(), v);
    b->provenance.push_back("QtQt: known");
    return;
  }
  WeightedSample sample{take_rows(d.W(), arm2), take(b->qtqy, arm2),
                        Eigen::VectorXd::Ones(static_cast<int>(arm2.size()))};
  FitOut out = fit_eval(resolve(s.qtqt, false), sample, d.W(), 0.0, b, "QtQt");
  b->qtqt = out.values;
}

void fit_eif_projection(const Dataset& d, const Eigen::ArrayXd& pseudo, PseudoKind which,
                        const NuisanceStrategy& s, NuisanceBundle* b) {
  if (pseudo.size() != d.n()) throw ConfigError("pseudo-outcome length mismatch");
  const NuisanceChoice& c = which == PseudoKind::full ? s.qd : s.qtd;
  const char* label = which == PseudoKind::full ? "QD" : "QtD";
  Eigen::ArrayXd* target = which == PseudoKind::full ? &b->qd : &b->qtd;

  if (c.mode == NuisanceMode::known) {
    const double v = c.known_value;
    if (!std::isfinite(v)) throw ConfigError(std::string(label) + ": known value not finite");
    *target = Eigen::ArrayXd::Constant(d.n(), v);
    b->provenance.push_back(std::string(label) + ": known");
    return;
  }

  // The partial pseudo-outcome is identically zero off the (A=a1, C=1)
  // stratum, and both indicators sit in the conditioning set, so its
  // conditional mean is an exact zero there: fit on the stratum only and pin
  // zeros elsewhere rather than letting an additive fit leak case-cell mass
  // into the other patterns.
  const bool partial = which == PseudoKind::partial;
  const std::vector<int> fit_rows =
      partial ? rows_where(d,
                           [&](int i) {
                             return d.R()(i) == 1 && d.A()(i) == b->pair.a1 && d.C()(i) == 1;
                           })
              : rows_where(d, [&](int i) { return d.R()(i) == 1; });
  if (fit_rows.empty()) throw InestimableError("no phase-two rows");
  const Eigen::VectorXd y = take(pseudo, fit_rows);
  if (!y.allFinite())
    throw ConfigError(std::string(label) + ": pseudo-outcome not finite on phase-two rows");

  LearnerSpec spec = resolve(c, false);
  spec.link = Link::identity;  // signed pseudo-outcomes
  for (auto& m : spec.ensemble_members) m.link = Link::identity;

  const Eigen::MatrixXd V = design_v(d);
  WeightedSample sample{take_rows(V, fit_rows), y,
                        Eigen::VectorXd::Ones(static_cast<int>(fit_rows.size()))};
  if (!partial) {
    FitOut out = fit_eval(spec, sample, V, 0.0, b, label);
    *target = out.values;
    return;
  }
  const std::vector<int> eval_rows = rows_where(
      d, [&](int i) { return d.A()(i) == b->pair.a1 && d.C()(i) == 1; });
  FitOut out = fit_eval(spec, sample, take_rows(V, eval_rows), 0.0, b, label);
  *target = Eigen::ArrayXd::Zero(d.n());
  for (size_t k = 0; k < eval_rows.size(); ++k)
    (*target)(eval_rows[k]) = out.values(static_cast<int>(k));
}

namespace {

LearnerSpec glm_main() { return {LearnerKind::glm_main_terms, Link::logit, {}, 10}; }
LearnerSpec glm_inter() { return {LearnerKind::glm_all_interactions, Link::logit, {}, 10}; }
LearnerSpec sat() { return {LearnerKind::saturated, Link::logit, {}, 10}; }

LearnerSpec stacked() {
  LearnerSpec s{LearnerKind::ensemble, Link::logit, {}, 10};
  s.ensemble_members = {LearnerSpec{LearnerKind::intercept_only, Link::logit, {}, 10},
                        glm_main(), glm_inter()};
  return s;
}

NuisanceChoice learner(const LearnerSpec& spec) {
  NuisanceChoice c;
  c.mode = NuisanceMode::learner;
  c.learner = spec;
  return c;
}

NuisanceChoice misspec() {
  NuisanceChoice c;
  c.mode = NuisanceMode::intercept_only;
  return c;
}

NuisanceChoice known(double v) {
  NuisanceChoice c;
  c.mode = NuisanceMode::known;
  c.known_value = v;
  return c;
}

NuisanceChoice design_gr() {
  NuisanceChoice c;
  c.mode = NuisanceMode::known;
  c.from_design = true;
  return c;
}

// Discrete-process baseline: parsimonious logistic fits for gA, gC, gR, QY;
// saturated fits for everything else.
NuisanceStrategy dgp1_base() {
  NuisanceStrategy s;
  s.ga = learner(glm_main());
  s.gc = learner(glm_main());
  s.gr = learner(glm_main());
  s.qy = learner(glm_main());
  s.gaws = learner(sat());
  s.qqy = learner(sat());
  s.qtqy = learner(sat());
  s.qtqt = learner(sat());
  s.qd = learner(sat());
  s.qtd = learner(sat());
  return s;
}

NuisanceStrategy dgp2_base(const LearnerSpec& spec) {
  NuisanceStrategy s;
  s.ga = known(0.5);
  s.gc = known(1.0);
  s.gr = design_gr();
  s.gaws = learner(spec);
  s.qy = learner(spec);
  s.qqy = learner(spec);
  s.qtqy = learner(spec);
  s.qtqt = learner(spec);
  s.qd = learner(spec);
  s.qtd = learner(spec);
  return s;
}

}  // namespace

NuisanceStrategy preset_strategy(const std::string& name) {
  // Discrete-process misspecification presets are named after the nuisances
  // that remain consistently estimated; all others fall back to
  // intercept-only fits (the sampling probability stays consistent
  // throughout).  The alternative path's second-stage regressions follow the
  // qqy switch; both influence projections follow the qd switch.
  if (name == "dgp1-all") return dgp1_base();
  if (name == "dgp1-saturated") {
    NuisanceStrategy s = dgp1_base();
    s.ga = learner(sat());
    s.gc = learner(sat());
    s.gr = learner(sat());
    s.qy = learner(sat());
    return s;
  }
  if (name == "dgp1-qy-qqy") {
    NuisanceStrategy s = dgp1_base();
    s.ga = misspec();
    s.gc = misspec();
    s.gaws = misspec();
    s.qd = misspec();
    s.qtd = misspec();
    return s;
  }
  if (name == "dgp1-qy-qqy-qd") {
    NuisanceStrategy s = dgp1_base();
    s.ga = misspec();
    s.gc = misspec();
    s.gaws = misspec();
    return s;
  }
  if (name == "dgp1-ga-gaws-gc") {
    NuisanceStrategy s = dgp1_base();
    s.qy = misspec();
    s.qqy = misspec();
    s.qtqy = misspec();
    s.qtqt = misspec();
    s.qd = misspec();
    s.qtd = misspec();
    return s;
  }
  if (name == "dgp1-ga-gaws-gc-qd") {
    NuisanceStrategy s = dgp1_base();
    s.qy = misspec();
    s.qqy = misspec();
    s.qtqy = misspec();
    s.qtqt = misspec();
    return s;
  }
  if (name == "dgp1-qy-ga-gc") {
    NuisanceStrategy s = dgp1_base();
    s.gaws = misspec();
    s.qqy = misspec();
    s.qtqy = misspec();
    s.qtqt = misspec();
    s.qd = misspec();
    s.qtd = misspec();
    return s;
  }
  if (name == "dgp1-qy-ga-gc-qd") {
    NuisanceStrategy s = dgp1_base();
    s.gaws = misspec();
    s.qqy = misspec();
    s.qtqy = misspec();
    s.qtqt = misspec();
    return s;
  }
  if (name == "dgp2-glm-inter") {
    NuisanceStrategy s = dgp2_base(glm_inter());
    // The treatment-given-mediator fit stays additive: with inverse-weighted
    // data the interacted design gives each covariate cell its own intercept
    // at the mediator's point mass, and cells whose weighted treated share
    // starves collapse onto the probability floor, exploding the density
    // ratio for any treated case evaluated there.
    s.gaws = learner(glm_main());
    return s;
  }
  if (name == "dgp2-glm-main") return dgp2_base(glm_main());
  if (name == "dgp2-sl") return dgp2_base(stacked());
  throw ConfigError("unknown strategy preset '" + name + "'");
}

std::vector<std::string> preset_names() {
  return {"dgp1-all",          "dgp1-saturated",     "dgp1-qy-qqy",
          "dgp1-qy-qqy-qd",    "dgp1-ga-gaws-gc",    "dgp1-ga-gaws-gc-qd",
          "dgp1-qy-ga-gc",     "dgp1-qy-ga-gc-qd",   "dgp2-glm-inter",
          "dgp2-glm-main",     "dgp2-sl"};
}

}  // namespace natmed
