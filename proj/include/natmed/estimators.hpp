#pragma once

#include <string>

#include "natmed/eif.hpp"

namespace natmed {

enum class Variant { classic, alternative, density_ratio };

// Point estimate of the counterfactual mean for one arm pair.  one_step =
// plug_in + mean of the influence column; variance_n is the column's
// variance (centered at its own mean), so se = sqrt(variance_n / n).
struct PsiEstimate {
  TargetPair pair;
  Variant variant = Variant::classic;
  double plug_in = std::numeric_limits<double>::quiet_NaN();
  double one_step = std::numeric_limits<double>::quiet_NaN();
  double variance_n = std::numeric_limits<double>::quiet_NaN();
  EifColumn eif;
  bool negative_estimate = false;
  bool clipped_nuisance = false;
  bool irls_fallback = false;
};

struct ValueCI {
  double value = std::numeric_limits<double>::quiet_NaN();
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;
};

// Joint estimates for the three arm pairs that enter the effect contrasts,
// with delta-method intervals: ratio contrasts on the log scale (intervals
// exponentiated), proportion mediated on its own scale.  A non-positive
// point estimate leaves the contrasts that involve it undefined.
struct EffectReport {
  Variant variant = Variant::classic;
  double ci_level = 0.95;
  int n = 0;
  PsiEstimate psi00, psi10, psi11;
  bool has_psi01 = false;
  PsiEstimate psi01;
  ValueCI vaccine_efficacy, indirect, direct, prop_mediated;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  // 1/n-scaled, order (00,10,11)
  bool negative_estimate = false;
  bool clipped_nuisance = false;
  bool irls_fallback = false;
  bool unstable_log = false;  // some log argument too close to zero
};

// Fits every nuisance the variant needs and assembles the estimate.  The
// ratio variant replaces the inverse-weighted outcome regression with the
// mediator-frequency construction (discrete mediators only, at most 20
// support points) and otherwise follows the rewritten-form path.
PsiEstimate estimate_psi(const Dataset& d, TargetPair pair, const NuisanceStrategy& s,
                         Variant variant);
PsiEstimate estimate_psi_classic(const Dataset& d, TargetPair pair, const NuisanceStrategy& s);
PsiEstimate estimate_psi_alternative(const Dataset& d, TargetPair pair,
                                     const NuisanceStrategy& s);
PsiEstimate estimate_psi_density_ratio(const Dataset& d, TargetPair pair,
                                       const NuisanceStrategy& s);

EffectReport effect_report(const Dataset& d, const NuisanceStrategy& s, Variant variant,
                           double ci_level = 0.95, bool include_psi01 = false);

// Wald interval for one counterfactual mean.
ValueCI psi_interval(const PsiEstimate& e, double ci_level);

// Standard normal quantile (Acklam's rational approximation, |error| < 1e-9).
double normal_quantile(double p);

// Human-readable block and flat CSV serializations.
std::string format_report(const EffectReport& r);
std::string report_csv_header();
std::string report_csv_row(const EffectReport& r);
void write_report_csv(const std::string& path, const EffectReport& r);

}  // namespace natmed
