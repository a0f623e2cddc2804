#pragma once

#include <string>
#include <vector>

#include "natmed/nuisance.hpp"

namespace natmed {

enum class EifVariant { full_data, classic, alternative };

// Per-row influence contributions for one arm pair.  Rows outside the
// phase-two sample carry only the terms that do not involve the mediator
// (each mediator term is multiplied by R in the formulas, so those entries
// are exactly the observed contribution, not an approximation).
struct EifColumn {
  EifVariant variant = EifVariant::classic;
  TargetPair pair;
  Eigen::ArrayXd values;
  double plug_in_used = 0.0;
};

// Complete-data contribution per row: inverse-weighted outcome residual for
// uncensored a1-arm rows, the arm-a2 regression residual, and the centered
// second-stage prediction.  Mediator-dependent pieces are zero off the
// phase-two sample.
Eigen::ArrayXd eval_full_data(const Dataset& d, const NuisanceBundle& b, double plug_in);

// Observed-data contribution: (R/gR) times the complete-data value plus
// (1 - R/gR) times its fitted projection.  Requires the projection column,
// which must have been fit against pseudo-outcomes computed with this same
// plug-in for the centering algebra to hold.
EifColumn eval_classic(const Dataset& d, const NuisanceBundle& b, double plug_in);

// Rewritten observed-data contribution built from the sequential-regression
// nuisances; the projection correction here involves only the first
// (plug-in-free) term, so any plug-in may be supplied after fitting.
EifColumn eval_alternative(const Dataset& d, const NuisanceBundle& b, double plug_in);

// First term of the complete-data contribution alone, the regression outcome
// for the rewritten form's projection; zero wherever the arm/censoring
// indicator or R is zero.
Eigen::ArrayXd partial_pseudo_outcome(const Dataset& d, const NuisanceBundle& b);

// Diagnostics export: header row,variant,value; one line per row per column.
void write_eif_csv(const std::string& path, const std::vector<EifColumn>& columns);

}  // namespace natmed
