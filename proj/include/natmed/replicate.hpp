#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "natmed/estimators.hpp"
#include "natmed/simulate.hpp"

namespace natmed {

enum class DgpKind { discrete, covid };

std::string dgp_name(DgpKind k);
DgpKind dgp_from_name(const std::string& name);

std::string variant_label(Variant v);
Variant variant_from_name(const std::string& name);

// One simulation study: which process, how large, how often, and how each
// replication is analyzed.  The discrete process tracks the (1,0) arm pair
// only (the one with a known efficiency bound); the trial-scale process
// tracks all three pairs plus the derived contrasts.
struct ScenarioConfig {
  std::string label;  // metrics `setting` column; defaults to the preset name
  DgpKind dgp = DgpKind::discrete;
  int n = 2000;
  int reps = 200;
  std::uint64_t seed = 1;
  double alpha = -3.1;  // trial-scale process only
  std::vector<Variant> estimators = {Variant::classic, Variant::alternative};
  std::string strategy_preset = "dgp1-all";
  bool use_inline_strategy = false;  // take `strategy` as given, skip the preset
  NuisanceStrategy strategy;
  double p_min = 1e-3;
  double ci_level = 0.95;
  int threads = 0;  // 0 = machine parallelism, 1 = sequential
  long long truth_draws = 1000000;  // Monte Carlo size for the trial-scale truth
};

// Per-replication payload, stripped of the per-row influence columns so a
// long run stays small.  NaN marks a value the scenario never computed.
struct PairRecord {
  double plug = std::numeric_limits<double>::quiet_NaN();
  double est = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
};

struct VariantRecord {
  Variant variant = Variant::classic;
  PairRecord psi00, psi10, psi11;
  ValueCI ve, indirect, direct, pm;
  bool clipped = false;
  bool irls_fallback = false;
  bool unstable_log = false;
};

struct RepRecord {
  int rep = 0;
  bool failed = false;
  std::string error;
  std::vector<VariantRecord> by_variant;  // scenario estimator order
};

// One metrics row per (setting, estimator, parameter).  Spread statistics
// are NaN (printed empty) when fewer than two usable replications exist;
// coverage counts replications whose interval contains the truth among
// those where the interval is defined.
struct MetricsRow {
  std::string setting;
  std::string dgp;
  int n = 0;
  int reps = 0;
  int failed = 0;
  int used = 0;
  std::string estimator;
  std::string parameter;
  double truth = std::numeric_limits<double>::quiet_NaN();
  double mean = std::numeric_limits<double>::quiet_NaN();
  double bias = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  double root_n_bias = std::numeric_limits<double>::quiet_NaN();
  double root_n_se = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double ratio_to_bound = std::numeric_limits<double>::quiet_NaN();
  double median_se_ratio = std::numeric_limits<double>::quiet_NaN();
  double negative_prop = std::numeric_limits<double>::quiet_NaN();
  int undefined = 0;
};

struct ReplicationResult {
  ScenarioConfig scenario;  // as run, with the strategy resolved
  TruthRecord truth;
  std::vector<RepRecord> reps;
  std::vector<MetricsRow> metrics;
  int failures = 0;
};

// Seed for replication `rep` under master seed `seed`; the same derivation
// child_rng uses, so results never depend on worker scheduling.
std::uint64_t child_seed(std::uint64_t seed, int rep);

// Runs the scenario: generates one dataset per replication on its child
// stream, applies every requested estimator, and aggregates.  Replications
// ending in FitError or InestimableError are recorded with their message and
// excluded from the metrics; anything else propagates.
ReplicationResult run_replications(const ScenarioConfig& sc);

// Aggregation alone, exposed so the counting rules can be validated on
// synthetic records with known coverage.
std::vector<MetricsRow> aggregate_metrics(const ScenarioConfig& sc, const TruthRecord& truth,
                                          const std::vector<RepRecord>& reps);

// Metrics table and per-replication interval table (header + rows).
std::string metrics_csv(const ReplicationResult& res);
std::string rep_csv(const ReplicationResult& res);
void write_metrics_csv(const std::string& path, const ReplicationResult& res);
void write_rep_csv(const std::string& path, const ReplicationResult& res);

}  // namespace natmed
