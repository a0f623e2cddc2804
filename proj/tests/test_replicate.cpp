#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "natmed/errors.hpp"
#include "natmed/replicate.hpp"
#include "natmed/rng.hpp"

using namespace natmed;

namespace {

int field_count(const std::string& line) {
  int c = 1;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') quoted = !quoted;
    else if (ch == ',' && !quoted) ++c;
  }
  return c;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') quoted = !quoted;
    else if (ch == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else cur += ch;
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string l;
  while (std::getline(ss, l)) out.push_back(l);
  return out;
}

const MetricsRow& find_row(const ReplicationResult& res, const std::string& estimator,
                           const std::string& parameter) {
  for (const MetricsRow& r : res.metrics)
    if (r.estimator == estimator && r.parameter == parameter) return r;
  throw std::runtime_error("missing metrics row " + estimator + "/" + parameter);
}

}  // namespace

TEST_CASE("child seeds are distinct and reproducible") {
  std::set<std::uint64_t> seen;
  for (int r = 0; r < 200; ++r) seen.insert(child_seed(7, r));
  CHECK(seen.size() == 200);
  CHECK(child_seed(7, 3) == child_seed(7, 3));
  CHECK(child_seed(7, 3) != child_seed(8, 3));
}

TEST_CASE("scenario validation") {
  ScenarioConfig sc;
  sc.reps = 0;
  CHECK_THROWS_AS(run_replications(sc), ConfigError);
  sc.reps = 10;
  sc.estimators.clear();
  CHECK_THROWS_AS(run_replications(sc), ConfigError);
  sc = ScenarioConfig{};
  sc.ci_level = 1.2;
  CHECK_THROWS_AS(run_replications(sc), ConfigError);
  sc = ScenarioConfig{};
  sc.p_min = 0.7;
  CHECK_THROWS_AS(run_replications(sc), ConfigError);
  sc = ScenarioConfig{};
  sc.strategy_preset = "no-such-preset";
  CHECK_THROWS_AS(run_replications(sc), ConfigError);
  sc = ScenarioConfig{};
  sc.dgp = DgpKind::covid;
  sc.estimators = {Variant::density_ratio};
  CHECK_THROWS_AS(run_replications(sc), ConfigError);
  sc = ScenarioConfig{};
  sc.dgp = DgpKind::covid;
  sc.truth_draws = 1000;
  CHECK_THROWS_AS(run_replications(sc), ConfigError);
  CHECK(dgp_from_name("discrete") == DgpKind::discrete);
  CHECK(dgp_from_name("covid") == DgpKind::covid);
  CHECK_THROWS_AS(dgp_from_name("other"), ConfigError);
  CHECK(variant_from_name("classic") == Variant::classic);
  CHECK(variant_from_name("density_ratio") == Variant::density_ratio);
  CHECK_THROWS_AS(variant_from_name("x"), ConfigError);
}

TEST_CASE("results are independent of worker scheduling") {
  ScenarioConfig sc;
  sc.dgp = DgpKind::discrete;
  sc.n = 300;
  sc.reps = 24;
  sc.seed = 11;
  sc.strategy_preset = "dgp1-saturated";
  sc.estimators = {Variant::classic, Variant::alternative};

  sc.threads = 1;
  ReplicationResult seq = run_replications(sc);
  sc.threads = 4;
  ReplicationResult par = run_replications(sc);
  ReplicationResult par2 = run_replications(sc);

  CHECK(metrics_csv(seq) == metrics_csv(par));
  CHECK(rep_csv(seq) == rep_csv(par));
  CHECK(metrics_csv(par) == metrics_csv(par2));
  CHECK(rep_csv(par) == rep_csv(par2));
}

TEST_CASE("discrete scenario metrics land near the oracle") {
  ScenarioConfig sc;
  sc.dgp = DgpKind::discrete;
  sc.n = 800;
  sc.reps = 60;
  sc.seed = 5;
  sc.strategy_preset = "dgp1-all";
  sc.estimators = {Variant::classic, Variant::alternative};
  sc.threads = 4;

  ReplicationResult res = run_replications(sc);
  CHECK(res.failures == 0);
  REQUIRE(res.metrics.size() == 2);  // one psi10 row per estimator
  for (const char* est : {"classic", "alternative"}) {
    const MetricsRow& r = find_row(res, est, "psi10");
    CAPTURE(est);
    CHECK(r.used == 60);
    CHECK(std::abs(r.root_n_bias) < 0.6);
    CHECK(r.coverage >= 0.85);
    CHECK(r.coverage <= 1.0);
    CHECK(r.ratio_to_bound > 0.6);
    CHECK(r.ratio_to_bound < 1.6);
    CHECK(r.median_se_ratio > 0.7);
    CHECK(r.median_se_ratio < 1.4);
    CHECK(r.negative_prop == 0.0);
  }
}

TEST_CASE("single replication reports spread as missing") {
  ScenarioConfig sc;
  sc.dgp = DgpKind::discrete;
  sc.n = 400;
  sc.reps = 1;
  sc.seed = 2;
  sc.strategy_preset = "dgp1-saturated";
  sc.estimators = {Variant::classic};

  ReplicationResult res = run_replications(sc);
  REQUIRE(res.metrics.size() == 1);
  const MetricsRow& r = res.metrics[0];
  CHECK(std::isfinite(r.mean));
  CHECK(std::isnan(r.sd));
  CHECK(std::isnan(r.root_n_se));
  CHECK(std::isnan(r.ratio_to_bound));
  CHECK((r.coverage == 0.0 || r.coverage == 1.0));

  const std::vector<std::string> ls = lines_of(metrics_csv(res));
  REQUIRE(ls.size() == 2);
  const std::vector<std::string> header = split_fields(ls[0]);
  const std::vector<std::string> row = split_fields(ls[1]);
  REQUIRE(header.size() == row.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "sd" || header[i] == "root_n_se" || header[i] == "ratio_to_bound" ||
        header[i] == "median_se_ratio")
      CHECK(row[i].empty());
    if (header[i] == "mean") CHECK(!row[i].empty());
  }
}

TEST_CASE("failed replications are excluded and counted") {
  // At this sample size some draws leave an estimation subgroup empty and the
  // fit throws; the run must finish, record the message, and aggregate over
  // the remaining replications.
  ScenarioConfig sc;
  sc.dgp = DgpKind::discrete;
  sc.n = 14;
  sc.reps = 60;
  sc.seed = 3;
  sc.strategy_preset = "dgp1-saturated";
  sc.estimators = {Variant::classic};
  sc.threads = 2;

  ReplicationResult res = run_replications(sc);
  CHECK(res.failures > 0);
  CHECK(res.failures < sc.reps);
  int counted = 0;
  for (const RepRecord& r : res.reps) {
    if (r.failed) {
      ++counted;
      CHECK(!r.error.empty());
      CHECK(r.by_variant.empty());
    } else {
      CHECK(r.by_variant.size() == 1);
    }
  }
  CHECK(counted == res.failures);
  const MetricsRow& m = res.metrics[0];
  CHECK(m.failed == res.failures);
  CHECK(m.used == sc.reps - res.failures);

  // Failed rows appear in the interval table with their message.
  int failed_rows = 0;
  const std::vector<std::string> ls = lines_of(rep_csv(res));
  for (std::size_t i = 1; i < ls.size(); ++i) {
    REQUIRE(field_count(ls[i]) == field_count(ls[0]));
    if (split_fields(ls[i])[3] == "1") ++failed_rows;
  }
  CHECK(failed_rows == res.failures);
}

TEST_CASE("coverage counting validated on a normal fixture") {
  ScenarioConfig sc;
  sc.dgp = DgpKind::discrete;
  sc.n = 1000;
  sc.reps = 100000;
  sc.label = "fixture";
  sc.estimators = {Variant::classic};

  TruthRecord truth = truth_dgp1();
  const double sigma = 0.02;
  Rng rng(99);
  std::vector<RepRecord> reps(100000);
  for (int r = 0; r < 100000; ++r) {
    reps[r].rep = r;
    VariantRecord vr;
    vr.variant = Variant::classic;
    const double est = truth.psi10 + sigma * rng.normal(0.0, 1.0);
    vr.psi10 = PairRecord{est, est, sigma, est - 1.96 * sigma, est + 1.96 * sigma};
    reps[r].by_variant.push_back(vr);
  }
  std::vector<MetricsRow> rows = aggregate_metrics(sc, truth, reps);
  REQUIRE(rows.size() == 1);
  const MetricsRow& m = rows[0];
  CHECK(m.coverage >= 0.94);
  CHECK(m.coverage <= 0.96);
  CHECK(std::abs(m.bias) < 4.0 * sigma / std::sqrt(100000.0));
  CHECK(m.sd == doctest::Approx(sigma).epsilon(0.02));
  CHECK(m.median_se_ratio == doctest::Approx(1.0).epsilon(0.02));
  CHECK(m.root_n_se == doctest::Approx(std::sqrt(1000.0) * m.sd).epsilon(1e-12));
}

TEST_CASE("trial-scale scenario wiring") {
  ScenarioConfig sc;
  sc.dgp = DgpKind::covid;
  sc.n = 20000;
  sc.alpha = -3.1;
  sc.reps = 2;
  sc.seed = 4;
  sc.strategy_preset = "dgp2-glm-main";
  sc.estimators = {Variant::alternative};
  sc.threads = 2;
  sc.truth_draws = 200000;

  ReplicationResult res = run_replications(sc);
  CHECK(res.failures == 0);
  REQUIRE(res.metrics.size() == 7);
  const MetricsRow& p00 = find_row(res, "alternative", "psi00");
  CHECK(p00.used == 2);
  CHECK(std::isfinite(p00.mean));
  // The placebo-arm mean is tightly estimated; huge misses mean broken wiring.
  CHECK(std::abs(p00.mean - res.truth.psi00) < 0.3 * res.truth.psi00);
  const std::vector<std::string> ls = lines_of(rep_csv(res));
  REQUIRE(ls.size() == 3);
  for (const std::string& l : ls) CHECK(field_count(l) == field_count(ls[0]));
  const MetricsRow& ind = find_row(res, "alternative", "indirect");
  CHECK(ind.used == 2);
  CHECK(ind.undefined >= 0);
  CHECK(ind.undefined <= 2);
}

TEST_CASE("csv writers round trip") {
  ScenarioConfig sc;
  sc.dgp = DgpKind::discrete;
  sc.n = 200;
  sc.reps = 3;
  sc.seed = 9;
  sc.strategy_preset = "dgp1-saturated";
  sc.estimators = {Variant::alternative, Variant::density_ratio};

  ReplicationResult res = run_replications(sc);
  write_metrics_csv("test_metrics_out.csv", res);
  write_rep_csv("test_reps_out.csv", res);
  std::ifstream m("test_metrics_out.csv"), p("test_reps_out.csv");
  REQUIRE(m.good());
  REQUIRE(p.good());
  std::stringstream mb, pb;
  mb << m.rdbuf();
  pb << p.rdbuf();
  CHECK(mb.str() == metrics_csv(res));
  CHECK(pb.str() == rep_csv(res));
  std::remove("test_metrics_out.csv");
  std::remove("test_reps_out.csv");
  // One interval row per (replication, estimator).
  CHECK(lines_of(pb.str()).size() == 1 + 3 * 2);
}
