#pragma once

#include <cstdint>
#include <limits>

#include "natmed/data.hpp"
#include "natmed/nuisance.hpp"

namespace natmed {

// Discrete verification process: binary W=(W1,W2), trinomial mediator,
// Bernoulli(1/4) subcohort plus all cases.
struct Dgp1Spec {
  int n = 2000;
  std::uint64_t seed = 1;
};

// Trial-scale process: three binary covariates, half randomization, mediator
// positive only in the treated arm, stratified without-replacement subcohort
// (113 treated / 15 control per covariate stratum) plus all cases.  alpha
// controls the event rate.
struct Dgp2Spec {
  int n = 30000;
  double alpha = -3.1;
  std::uint64_t seed = 1;
  int per_stratum_vaccine = 113;
  int per_stratum_placebo = 15;
};

struct TruthRecord {
  enum class Method { enumeration, monte_carlo };
  Method method = Method::enumeration;
  long long draws = 0;

  double psi00 = 0, psi10 = 0, psi11 = 0;
  // E{D^2} per pair; enumeration only (NaN under Monte Carlo).
  double bound00 = std::numeric_limits<double>::quiet_NaN();
  double bound10 = std::numeric_limits<double>::quiet_NaN();
  double bound11 = std::numeric_limits<double>::quiet_NaN();

  double ve = 0, indirect = 0, direct = 0, prop_mediated = 0;

  // Monte Carlo standard errors (monte_carlo method only).
  double mc_se_psi00 = 0, mc_se_psi10 = 0, mc_se_psi11 = 0;
  double mc_se_ve = 0, mc_se_indirect = 0, mc_se_direct = 0, mc_se_pm = 0;

  // Enumeration diagnostics: the influence function evaluated at the true
  // nuisances must average to zero, and its two algebraic forms must agree
  // on the variance bound.
  double max_abs_eif_mean = 0;
  double bound10_alt = std::numeric_limits<double>::quiet_NaN();
};

// Both generators record the per-row design sampling probability (1 on
// cases) alongside the data.
Dataset gen_dgp1(const Dgp1Spec& spec);
Dataset gen_dgp2(const Dgp2Spec& spec, bool* stratum_shortfall = nullptr);

// Exact enumeration over the finite support of the discrete process;
// runtime well under a second.
TruthRecord truth_dgp1();

// Monte Carlo evaluation of the counterfactual means for the trial-scale
// process; standard errors reported for every derived quantity.
TruthRecord truth_dgp2(double alpha, long long draws, std::uint64_t seed = 20240901);

// Counterfactual mean of the discrete process for one arm pair.
double psi_dgp1(TargetPair pair);

// Closed-form nuisance evaluations for the discrete process, one value per
// dataset row; the sampling probability follows the design law (1 on cases,
// 1/4 otherwise) and the influence projections embed the true value of the
// functional.  Intended for oracle checks.
NuisanceBundle exact_dgp1_bundle(const Dataset& d, TargetPair pair);

}  // namespace natmed
