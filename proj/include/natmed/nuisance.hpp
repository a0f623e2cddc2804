#pragma once

#include <limits>
#include <string>
#include <vector>

#include "natmed/data.hpp"
#include "natmed/regress.hpp"

namespace natmed {

// Arm pair of the target functional: outcome regression under arm a1,
// mediator distribution under arm a2.
struct TargetPair {
  int a1 = 1;
  int a2 = 0;
};

enum class NuisanceMode {
  known,          // fixed value (or the design sampling-probability column)
  learner,        // fit the configured learner
  intercept_only  // deliberate misspecification: constant = subgroup mean
};

struct NuisanceChoice {
  NuisanceMode mode = NuisanceMode::learner;
  LearnerSpec learner;  // learner mode only
  double known_value = std::numeric_limits<double>::quiet_NaN();
  bool from_design = false;  // sampling probability only: read the recorded column
};

// One entry per nuisance regression.  ga/gc/gaws/gr always fit on the logit
// scale and clip to [p_min, 1-p_min]; outcome regressions (qy, qqy, qtqy,
// qtqt) are left unclipped so degenerate outcomes stay exact, and the
// influence-projection regressions (qd, qtd) use the identity link.
struct NuisanceStrategy {
  NuisanceChoice ga, gc, gr, gaws;
  NuisanceChoice qy, qqy, qtqy, qtqt;
  NuisanceChoice qd, qtd;
  double p_min = 1e-3;
};

// Named strategies: the discrete-process estimation settings (one per
// consistent-nuisance block, everything else intercept-only), the
// fully saturated variant, and the trial-scale GLM/stacked strategies.
NuisanceStrategy preset_strategy(const std::string& name);
std::vector<std::string> preset_names();

// Per-row evaluations of every fitted nuisance on one dataset for one arm
// pair.  Entries are empty (size 0) until the corresponding fit runs;
// phase-two-only columns (qy, aws_ratio) hold zeros on rows outside the
// phase-two sample and are never read there.
struct NuisanceBundle {
  TargetPair pair;
  double p_min = 1e-3;

  Eigen::ArrayXd gr;         // P(R=1 | W, A, C, CY)
  Eigen::ArrayXd ga2;        // P(A=a2 | W)
  Eigen::ArrayXd gc1;        // P(C=1 | A=a1, W)
  Eigen::ArrayXd aws_ratio;  // P(A=a2|W,S) / P(A=a1|W,S), phase-two rows
  Eigen::ArrayXd qy;         // E(Y | A=a1, C=1, W, S), phase-two rows
  Eigen::ArrayXd qqy;        // E{qy | A=a2, W}
  Eigen::ArrayXd qtqy;       // E{qy | R=1, W, A, C, CY}
  Eigen::ArrayXd qtqt;       // E{qtqy | A=a2, W}
  Eigen::ArrayXd qd;         // projection of the full influence contribution on (W,A,C,CY)
  Eigen::ArrayXd qtd;        // projection of its inverse-weighted first term

  bool clipped_nuisance = false;
  bool irls_fallback = false;
  bool aws_skipped = false;  // a1 == a2: ratio is identically 1, nothing to fit
  std::vector<std::string> provenance;
};

// Sampling probability of phase-two membership.  Learner path regresses R on
// (W, A, category dummies); when the data show every case in phase two, the
// fit uses non-case rows only and cases are pinned to probability 1.
void fit_gR(const Dataset& d, const NuisanceStrategy& s, NuisanceBundle* b);

// Arm assignment P(A=a2|W) on all rows and non-censoring P(C=1|A=a1,W) on
// the a1 arm, both unweighted.
void fit_phase1_nuisances(const Dataset& d, TargetPair pair, const NuisanceStrategy& s,
                          NuisanceBundle* b);

// Inverse-probability-weighted phase-two regressions: the outcome regression
// on (W,S) among a1-arm uncensored phase-two rows, and the arm regression on
// (W,S) among all phase-two rows (skipped when a1 == a2).
void fit_phase2_nuisances(const Dataset& d, TargetPair pair, const NuisanceStrategy& s,
                          NuisanceBundle* b);

// Weighted regression of the fitted outcome values onto W among a2-arm
// phase-two rows.
void fit_classic_second_stage(const Dataset& d, TargetPair pair, const NuisanceStrategy& s,
                              NuisanceBundle* b);

// Unweighted sequential regressions of the fitted outcome values: first onto
// (W, A, category dummies) among phase-two rows, then onto W among every
// a2-arm row.
void fit_alternative_second_stage(const Dataset& d, TargetPair pair,
                                  const NuisanceStrategy& s, NuisanceBundle* b);

enum class PseudoKind { full, partial };

// Unweighted identity-link regression of a per-row pseudo-outcome (defined on
// phase-two rows) onto (W, A, category dummies); fills qd or qtd.
void fit_eif_projection(const Dataset& d, const Eigen::ArrayXd& pseudo, PseudoKind which,
                        const NuisanceStrategy& s, NuisanceBundle* b);

}  // namespace natmed
