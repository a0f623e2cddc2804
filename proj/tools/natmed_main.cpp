#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "natmed/config.hpp"
#include "natmed/errors.hpp"
#include "natmed/estimators.hpp"
#include "natmed/replicate.hpp"
#include "natmed/simulate.hpp"

using namespace natmed;
namespace fs = std::filesystem;

namespace {

struct Overrides {
  CLI::Option *seed = nullptr, *reps = nullptr, *n = nullptr, *alpha = nullptr,
              *threads = nullptr, *out = nullptr, *ci = nullptr, *pmin = nullptr,
              *est = nullptr;
  std::uint64_t seed_v = 1;
  int reps_v = 0, n_v = 0, threads_v = 0;
  double alpha_v = 0, ci_v = 0.95, pmin_v = 1e-3;
  std::vector<std::string> est_v;
  std::string out_v;
};

void add_common(CLI::App* cmd, Overrides* o, std::string* config_path) {
  cmd->add_option("--config", *config_path, "configuration file");
  o->seed = cmd->add_option("--seed", o->seed_v, "master seed");
  o->reps = cmd->add_option("--reps", o->reps_v, "replication count");
  o->n = cmd->add_option("--n", o->n_v, "sample size per replication");
  o->alpha = cmd->add_option("--alpha", o->alpha_v, "trial-scale event-rate intercept");
  o->est = cmd->add_option("--estimator", o->est_v, "estimator name (repeatable)");
  o->threads = cmd->add_option("--threads", o->threads_v, "worker threads (0 = machine)");
  o->out = cmd->add_option("--out", o->out_v, "output directory");
  o->ci = cmd->add_option("--ci-level", o->ci_v, "confidence level");
  o->pmin = cmd->add_option("--p-min", o->pmin_v, "probability floor for inverse weights");
}

RunConfig merged(const std::string& config_path, const Overrides& o) {
  RunConfig rc = config_path.empty() ? RunConfig{} : load_config(config_path);
  ScenarioConfig& sc = rc.scenario;
  if (o.seed->count() > 0) {
    sc.seed = o.seed_v;
  } else if (const char* env = std::getenv("NATMED_SEED")) {
    try {
      std::size_t pos = 0;
      sc.seed = std::stoull(env, &pos);
      if (pos != std::string(env).size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ConfigError("NATMED_SEED is not an unsigned integer");
    }
  }
  if (o.reps->count() > 0) sc.reps = o.reps_v;
  if (o.n->count() > 0) sc.n = o.n_v;
  if (o.alpha->count() > 0) sc.alpha = o.alpha_v;
  if (o.threads->count() > 0) sc.threads = o.threads_v;
  if (o.ci->count() > 0) sc.ci_level = o.ci_v;
  if (o.pmin->count() > 0) sc.p_min = o.pmin_v;
  if (o.est->count() > 0) {
    sc.estimators.clear();
    for (const std::string& name : o.est_v) sc.estimators.push_back(variant_from_name(name));
  }
  if (o.out->count() > 0) rc.out_dir = o.out_v;
  return rc;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_simulate(const std::string& config_path, const Overrides& o) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig rc = merged(config_path, o);
  ReplicationResult res = run_replications(rc.scenario);
  rc.scenario = res.scenario;  // resolved form for the manifest echo

  fs::create_directories(rc.out_dir);
  const std::string mpath = rc.out_dir + "/metrics.csv";
  const std::string rpath = rc.out_dir + "/replications.csv";
  write_metrics_csv(mpath, res);
  write_rep_csv(rpath, res);

  RunManifest man;
  man.command = "simulate";
  man.replication_failures = res.failures;
  man.digests = {{"metrics.csv", file_digest_hex(mpath)},
                 {"replications.csv", file_digest_hex(rpath)}};
  man.config_text = serialize_config(rc);
  man.wall_seconds = seconds_since(t0);
  write_manifest(rc.out_dir + "/manifest.txt", man);

  std::printf("scenario %s: dgp=%s n=%d reps=%d failures=%d\n", res.scenario.label.c_str(),
              dgp_name(res.scenario.dgp).c_str(), res.scenario.n, res.scenario.reps,
              res.failures);
  std::printf("wrote %s and %s\n", mpath.c_str(), rpath.c_str());
  if (res.failures * 10 > res.scenario.reps) {
    std::fprintf(stderr, "error: %d of %d replications failed\n", res.failures,
                 res.scenario.reps);
    return 3;
  }
  return 0;
}

// Joins a stratum-probability table (key columns then a probability column)
// against the data; keys may be covariate columns or the arm column.
Dataset join_design_gr(const Dataset& d, const std::string& path, const RunConfig& rc) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("cannot read design table '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("design table '" + path + "' is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) header.push_back(tok);
  }
  if (header.size() < 2) throw DataError("design table needs key columns and a probability");

  const std::vector<std::string>& names = d.covariate_names();
  std::vector<int> key_src;  // covariate index, or -1 for the arm column
  for (std::size_t j = 0; j + 1 < header.size(); ++j) {
    if (header[j] == rc.a_col) {
      key_src.push_back(-1);
      continue;
    }
    bool found = false;
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (names[k] == header[j]) {
        key_src.push_back(static_cast<int>(k));
        found = true;
        break;
      }
    }
    if (!found)
      throw DataError("design table key '" + header[j] +
                      "' is neither a covariate nor the arm column");
  }

  std::map<std::vector<double>, double> table;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) {
      try {
        vals.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw DataError("design table line " + std::to_string(lineno) +
                        ": not a number: '" + tok + "'");
      }
    }
    if (vals.size() != header.size())
      throw DataError("design table line " + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " fields");
    const double p = vals.back();
    if (!(p > 0.0 && p <= 1.0))
      throw DataError("design table line " + std::to_string(lineno) +
                      ": probability must lie in (0,1]");
    vals.pop_back();
    table[vals] = p;
  }

  // The table describes subcohort sampling; when the data show every case in
  // phase two, case rows are sampled with certainty.
  const bool pin_cases = validate_case_cohort(d).all_cases_sampled;
  Eigen::ArrayXd gr(d.n());
  for (int i = 0; i < d.n(); ++i) {
    if (pin_cases && d.CY()(i) != 0.0) {
      gr(i) = 1.0;
      continue;
    }
    std::vector<double> key;
    for (int src : key_src)
      key.push_back(src < 0 ? static_cast<double>(d.A()(i)) : d.W()(i, src));
    auto it = table.find(key);
    if (it == table.end()) {
      std::string shown;
      for (double v : key) shown += (shown.empty() ? "" : ",") + std::to_string(v);
      throw DataError("no design probability for stratum (" + shown + ")");
    }
    gr(i) = it->second;
  }
  return Dataset(d.W(), d.A(), d.R(), d.S(), d.C(), d.CY(), names, d.meta(), gr);
}

int cmd_estimate(const std::string& config_path, const Overrides& o,
                 const std::string& data_arg) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig rc = merged(config_path, o);
  if (!data_arg.empty()) rc.data_path = data_arg;
  if (rc.data_path.empty())
    throw ConfigError("no input data (pass a DATA argument or set data= in the config)");
  if (rc.w_cols.empty())
    throw ConfigError("w_cols must name the covariate columns of the data file");
  if (rc.scenario.estimators.empty()) throw ConfigError("no estimators requested");
  if (!(rc.scenario.ci_level > 0.0 && rc.scenario.ci_level < 1.0))
    throw ConfigError("confidence level must lie in (0,1)");
  if (!(rc.scenario.p_min >= 0.0 && rc.scenario.p_min < 0.5))
    throw ConfigError("probability floor must lie in [0, 0.5)");

  Dataset d = load_csv(rc.data_path, config_schema(rc));
  if (!rc.design_gr_path.empty()) d = join_design_gr(d, rc.design_gr_path, rc);

  NuisanceStrategy strat = rc.scenario.use_inline_strategy
                               ? rc.scenario.strategy
                               : preset_strategy(rc.scenario.strategy_preset);
  strat.p_min = rc.scenario.p_min;

  fs::create_directories(rc.out_dir);
  std::string all_text;
  RunManifest man;
  man.command = "estimate";
  for (Variant v : rc.scenario.estimators) {
    EffectReport er = effect_report(d, strat, v, rc.scenario.ci_level);
    const std::string text = format_report(er);
    std::fputs(text.c_str(), stdout);
    all_text += text + "\n";
    const std::string fname = "report_" + variant_label(v) + ".csv";
    write_report_csv(rc.out_dir + "/" + fname, er);
    man.digests.emplace_back(fname, file_digest_hex(rc.out_dir + "/" + fname));
  }
  {
    std::ofstream txt(rc.out_dir + "/report.txt", std::ios::binary);
    if (!txt.good()) throw std::runtime_error("cannot open " + rc.out_dir + "/report.txt");
    txt << all_text;
  }
  man.digests.emplace_back("report.txt", file_digest_hex(rc.out_dir + "/report.txt"));
  man.config_text = serialize_config(rc);
  man.wall_seconds = seconds_since(t0);
  write_manifest(rc.out_dir + "/manifest.txt", man);
  std::printf("wrote reports under %s\n", rc.out_dir.c_str());
  return 0;
}

int cmd_truth(const std::string& dgp_arg, double alpha, long long draws,
              const std::string& out_dir, bool alpha_given) {
  const auto t0 = std::chrono::steady_clock::now();
  const DgpKind kind = dgp_from_name(dgp_arg);
  if (kind == DgpKind::discrete && alpha_given)
    throw ConfigError("alpha applies to the trial-scale process only");
  if (draws < 1) throw ConfigError("draws must be positive");

  TruthRecord t = kind == DgpKind::discrete ? truth_dgp1() : truth_dgp2(alpha, draws);

  std::string text;
  auto kv = [&text](const char* k, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s = %.12g\n", k, v);
    text += buf;
  };
  text += std::string("method = ") +
          (t.method == TruthRecord::Method::enumeration ? "enumeration" : "monte_carlo") + "\n";
  if (kind == DgpKind::covid) {
    kv("alpha", alpha);
    text += "draws = " + std::to_string(t.draws) + "\n";
  }
  kv("psi00", t.psi00);
  kv("psi10", t.psi10);
  kv("psi11", t.psi11);
  if (std::isfinite(t.bound10)) {
    kv("bound00", t.bound00);
    kv("bound10", t.bound10);
    kv("bound11", t.bound11);
  }
  kv("vaccine_efficacy", t.ve);
  kv("indirect", t.indirect);
  kv("direct", t.direct);
  kv("prop_mediated", t.prop_mediated);
  if (t.method == TruthRecord::Method::monte_carlo) {
    kv("mc_se_psi00", t.mc_se_psi00);
    kv("mc_se_psi10", t.mc_se_psi10);
    kv("mc_se_psi11", t.mc_se_psi11);
    kv("mc_se_vaccine_efficacy", t.mc_se_ve);
    kv("mc_se_indirect", t.mc_se_indirect);
    kv("mc_se_direct", t.mc_se_direct);
    kv("mc_se_prop_mediated", t.mc_se_pm);
    if (draws < 100000)
      text += "warning = Monte Carlo standard error exceeds the reporting precision\n";
  } else {
    kv("max_abs_eif_mean", t.max_abs_eif_mean);
  }

  fs::create_directories(out_dir);
  const std::string tpath = out_dir + "/truth.txt";
  {
    std::ofstream f(tpath, std::ios::binary);
    if (!f.good()) throw std::runtime_error("cannot open " + tpath);
    f << text;
  }
  std::fputs(text.c_str(), stdout);

  RunConfig rc;
  rc.scenario.dgp = kind;
  rc.scenario.alpha = alpha;
  rc.scenario.truth_draws = draws;
  rc.out_dir = out_dir;
  RunManifest man;
  man.command = "truth";
  man.digests = {{"truth.txt", file_digest_hex(tpath)}};
  man.config_text = serialize_config(rc);
  man.wall_seconds = seconds_since(t0);
  write_manifest(out_dir + "/manifest.txt", man);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"case-cohort mediation estimators for vaccine trials"};
  app.require_subcommand(1);
  int code = 0;

  std::string sim_config;
  Overrides sim_o;
  CLI::App* sim = app.add_subcommand("simulate", "run a replicated simulation scenario");
  add_common(sim, &sim_o, &sim_config);
  sim->callback([&] { code = cmd_simulate(sim_config, sim_o); });

  std::string est_config, est_data;
  Overrides est_o;
  CLI::App* est = app.add_subcommand("estimate", "estimate mediation effects from a CSV file");
  est->add_option("data", est_data, "input data CSV");
  add_common(est, &est_o, &est_config);
  est->callback([&] { code = cmd_estimate(est_config, est_o, est_data); });

  std::string truth_dgp = "discrete", truth_out = ".";
  double truth_alpha = -3.1;
  long long truth_draws = 1000000;
  CLI::App* tr = app.add_subcommand("truth", "compute oracle values of the target parameters");
  tr->add_option("dgp", truth_dgp, "process name: discrete or covid")->required();
  CLI::Option* alpha_opt = tr->add_option("--alpha", truth_alpha, "event-rate intercept");
  tr->add_option("--draws", truth_draws, "Monte Carlo draws");
  tr->add_option("--out", truth_out, "output directory");
  tr->callback([&] {
    code = cmd_truth(truth_dgp, truth_alpha, truth_draws, truth_out, alpha_opt->count() > 0);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const InestimableError& e) {
    std::fprintf(stderr, "inestimable: %s\n", e.what());
    return 4;
  } catch (const FitError& e) {
    std::fprintf(stderr, "fit failed: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return code;
}
