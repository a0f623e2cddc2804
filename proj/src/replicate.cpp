#include "natmed/replicate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

#include "natmed/errors.hpp"
#include "natmed/rng.hpp"

namespace natmed {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v, double mean) {
  double s = 0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

PairRecord pair_record(const PsiEstimate& e, int n, double ci_level) {
  PairRecord p;
  p.plug = e.plug_in;
  p.est = e.one_step;
  p.se = std::sqrt(e.variance_n / static_cast<double>(n));
  ValueCI c = psi_interval(e, ci_level);
  p.lo = c.lo;
  p.hi = c.hi;
  return p;
}

Dataset make_data(const ScenarioConfig& sc, std::uint64_t seed) {
  if (sc.dgp == DgpKind::discrete) {
    Dgp1Spec g;
    g.n = sc.n;
    g.seed = seed;
    return gen_dgp1(g);
  }
  Dgp2Spec g;
  g.n = sc.n;
  g.alpha = sc.alpha;
  g.seed = seed;
  return gen_dgp2(g);
}

VariantRecord analyze(const Dataset& d, const ScenarioConfig& sc, Variant v) {
  VariantRecord out;
  out.variant = v;
  if (sc.dgp == DgpKind::discrete) {
    PsiEstimate e = estimate_psi(d, TargetPair{1, 0}, sc.strategy, v);
    out.psi10 = pair_record(e, d.n(), sc.ci_level);
    out.clipped = e.clipped_nuisance;
    out.irls_fallback = e.irls_fallback;
    return out;
  }
  EffectReport r = effect_report(d, sc.strategy, v, sc.ci_level);
  out.psi00 = pair_record(r.psi00, r.n, sc.ci_level);
  out.psi10 = pair_record(r.psi10, r.n, sc.ci_level);
  out.psi11 = pair_record(r.psi11, r.n, sc.ci_level);
  out.ve = r.vaccine_efficacy;
  out.indirect = r.indirect;
  out.direct = r.direct;
  out.pm = r.prop_mediated;
  out.clipped = r.clipped_nuisance;
  out.irls_fallback = r.irls_fallback;
  out.unstable_log = r.unstable_log;
  return out;
}

// One scalar parameter as seen in one replication.
struct Obs {
  double est, se, lo, hi;
  bool defined, negative;
};

Obs pull(const VariantRecord& vr, int slot) {
  auto from_pair = [](const PairRecord& p) {
    return Obs{p.est, p.se, p.lo, p.hi, !std::isnan(p.est), p.est < 0.0};
  };
  auto from_ci = [](const ValueCI& c) { return Obs{c.value, kNaN, c.lo, c.hi, c.defined, false}; };
  switch (slot) {
    case 0: return from_pair(vr.psi00);
    case 1: return from_pair(vr.psi10);
    case 2: return from_pair(vr.psi11);
    case 3: return from_ci(vr.ve);
    case 4: return from_ci(vr.indirect);
    case 5: return from_ci(vr.direct);
    default: return from_ci(vr.pm);
  }
}

std::string num(double x) {
  if (std::isnan(x)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  std::fputs(text.c_str(), f);
  if (std::fclose(f) != 0) throw std::runtime_error("failed to write " + path);
}

}  // namespace

std::string dgp_name(DgpKind k) { return k == DgpKind::discrete ? "discrete" : "covid"; }

DgpKind dgp_from_name(const std::string& name) {
  if (name == "discrete") return DgpKind::discrete;
  if (name == "covid") return DgpKind::covid;
  throw ConfigError("unknown process '" + name + "' (expected discrete or covid)");
}

std::string variant_label(Variant v) {
  switch (v) {
    case Variant::classic: return "classic";
    case Variant::alternative: return "alternative";
    default: return "density_ratio";
  }
}

Variant variant_from_name(const std::string& name) {
  if (name == "classic") return Variant::classic;
  if (name == "alternative") return Variant::alternative;
  if (name == "density_ratio") return Variant::density_ratio;
  throw ConfigError("unknown estimator '" + name + "'");
}

std::uint64_t child_seed(std::uint64_t seed, int rep) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s = a ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(rep) + 1));
  return splitmix64(s);
}

std::vector<MetricsRow> aggregate_metrics(const ScenarioConfig& sc, const TruthRecord& truth,
                                          const std::vector<RepRecord>& reps) {
  struct Param {
    const char* name;
    int slot;
    double truth;
    double bound;
    bool is_pair;
  };
  std::vector<Param> params;
  if (sc.dgp == DgpKind::covid) {
    params = {{"psi00", 0, truth.psi00, truth.bound00, true},
              {"psi10", 1, truth.psi10, truth.bound10, true},
              {"psi11", 2, truth.psi11, truth.bound11, true},
              {"vaccine_efficacy", 3, truth.ve, kNaN, false},
              {"indirect", 4, truth.indirect, kNaN, false},
              {"direct", 5, truth.direct, kNaN, false},
              {"prop_mediated", 6, truth.prop_mediated, kNaN, false}};
  } else {
    params = {{"psi10", 1, truth.psi10, truth.bound10, true}};
  }

  int failed = 0;
  for (const RepRecord& r : reps) failed += r.failed ? 1 : 0;

  std::vector<MetricsRow> rows;
  for (std::size_t vi = 0; vi < sc.estimators.size(); ++vi) {
    for (const Param& p : params) {
      MetricsRow row;
      row.setting = sc.label;
      row.dgp = dgp_name(sc.dgp);
      row.n = sc.n;
      row.reps = static_cast<int>(reps.size());
      row.failed = failed;
      row.used = row.reps - failed;
      row.estimator = variant_label(sc.estimators[vi]);
      row.parameter = p.name;
      row.truth = p.truth;

      std::vector<double> est, ses;
      int covered = 0, ci_n = 0, neg = 0, undef = 0;
      for (const RepRecord& rec : reps) {
        if (rec.failed) continue;
        Obs o = pull(rec.by_variant.at(vi), p.slot);
        if (!o.defined) {
          ++undef;
          continue;
        }
        est.push_back(o.est);
        if (!std::isnan(o.se)) ses.push_back(o.se);
        if (!std::isnan(o.lo) && !std::isnan(o.hi)) {
          ++ci_n;
          if (o.lo <= p.truth && p.truth <= o.hi) ++covered;
        }
        if (o.negative) ++neg;
      }
      row.undefined = undef;
      const int m = static_cast<int>(est.size());
      if (m >= 1) {
        row.mean = mean_of(est);
        row.bias = row.mean - p.truth;
        row.root_n_bias = std::sqrt(static_cast<double>(sc.n)) * row.bias;
        if (p.is_pair) row.negative_prop = static_cast<double>(neg) / m;
      }
      if (m >= 2) {
        row.sd = sd_of(est, row.mean);
        row.root_n_se = std::sqrt(static_cast<double>(sc.n)) * row.sd;
        if (p.is_pair && !ses.empty() && row.sd > 0)
          row.median_se_ratio = median_of(ses) / row.sd;
        if (!std::isnan(p.bound) && p.bound > 0)
          row.ratio_to_bound = row.root_n_se / std::sqrt(p.bound);
      }
      if (ci_n > 0) row.coverage = static_cast<double>(covered) / ci_n;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

ReplicationResult run_replications(const ScenarioConfig& sc_in) {
  ScenarioConfig sc = sc_in;
  if (sc.n < 1) throw ConfigError("sample size must be positive");
  if (sc.reps < 1) throw ConfigError("replication count must be at least 1");
  if (sc.estimators.empty()) throw ConfigError("no estimators requested");
  if (!(sc.ci_level > 0.0 && sc.ci_level < 1.0))
    throw ConfigError("confidence level must lie in (0,1)");
  if (!(sc.p_min >= 0.0 && sc.p_min < 0.5))
    throw ConfigError("probability floor must lie in [0, 0.5)");
  if (sc.dgp == DgpKind::covid) {
    for (Variant v : sc.estimators)
      if (v == Variant::density_ratio)
        throw ConfigError("the ratio estimator needs a discrete mediator");
    if (sc.truth_draws < 100000)
      throw ConfigError("trial-scale truth needs at least 100000 draws");
  }
  if (!sc.use_inline_strategy) sc.strategy = preset_strategy(sc.strategy_preset);
  sc.strategy.p_min = sc.p_min;
  if (sc.label.empty()) sc.label = sc.use_inline_strategy ? "inline" : sc.strategy_preset;

  ReplicationResult res;
  res.truth = sc.dgp == DgpKind::discrete ? truth_dgp1() : truth_dgp2(sc.alpha, sc.truth_draws);
  res.reps.assign(static_cast<std::size_t>(sc.reps), RepRecord{});

  auto one_rep = [&](int r) {
    RepRecord rec;
    rec.rep = r;
    try {
      Dataset d = make_data(sc, child_seed(sc.seed, r));
      for (Variant v : sc.estimators) rec.by_variant.push_back(analyze(d, sc, v));
    } catch (const FitError& e) {
      rec.failed = true;
      rec.error = e.what();
      rec.by_variant.clear();
    } catch (const InestimableError& e) {
      rec.failed = true;
      rec.error = e.what();
      rec.by_variant.clear();
    }
    res.reps[static_cast<std::size_t>(r)] = std::move(rec);
  };

  int threads = sc.threads > 0 ? sc.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, sc.reps));
  if (threads == 1) {
    for (int r = 0; r < sc.reps; ++r) one_rep(r);
  } else {
    std::atomic<int> next{0};
    std::mutex mu;
    std::exception_ptr eptr;
    auto worker = [&] {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= sc.reps) return;
        try {
          one_rep(r);
        } catch (...) {
          std::lock_guard<std::mutex> lk(mu);
          if (!eptr) eptr = std::current_exception();
          next.store(sc.reps);
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (eptr) std::rethrow_exception(eptr);
  }

  for (const RepRecord& r : res.reps) res.failures += r.failed ? 1 : 0;
  res.metrics = aggregate_metrics(sc, res.truth, res.reps);
  res.scenario = sc;
  return res;
}

std::string metrics_csv(const ReplicationResult& res) {
  std::string out =
      "setting,dgp,n,reps,failed,used,estimator,parameter,truth,mean,bias,sd,"
      "root_n_bias,root_n_se,coverage,ratio_to_bound,median_se_ratio,negative_prop,"
      "undefined\n";
  for (const MetricsRow& r : res.metrics) {
    char head[160];
    std::snprintf(head, sizeof(head), ",%d,%d,%d,%d,", r.n, r.reps, r.failed, r.used);
    out += csv_quote(r.setting) + "," + r.dgp + head + r.estimator + "," + r.parameter;
    for (double x : {r.truth, r.mean, r.bias, r.sd, r.root_n_bias, r.root_n_se, r.coverage,
                     r.ratio_to_bound, r.median_se_ratio, r.negative_prop})
      out += "," + num(x);
    out += "," + std::to_string(r.undefined) + "\n";
  }
  return out;
}

std::string rep_csv(const ReplicationResult& res) {
  std::string out =
      "setting,estimator,rep,failed,error,plug00,psi00,se00,lo00,hi00,plug10,psi10,"
      "se10,lo10,hi10,plug11,psi11,se11,lo11,hi11,ve,ve_lo,ve_hi,indirect,indirect_lo,"
      "indirect_hi,direct,direct_lo,direct_hi,pm,pm_lo,pm_hi,clipped,irls_fallback,"
      "unstable_log\n";
  const std::string setting = csv_quote(res.scenario.label);
  auto ci_cols = [](const ValueCI& c) {
    if (!c.defined) return std::string(",,,");
    return "," + num(c.value) + "," + num(c.lo) + "," + num(c.hi);
  };
  auto pair_cols = [](const PairRecord& p) {
    return "," + num(p.plug) + "," + num(p.est) + "," + num(p.se) + "," + num(p.lo) + "," +
           num(p.hi);
  };
  for (const RepRecord& rec : res.reps) {
    if (rec.failed) {
      out += setting + ",," + std::to_string(rec.rep) + ",1," + csv_quote(rec.error);
      out += std::string(30, ',');
      out += "\n";
      continue;
    }
    for (const VariantRecord& vr : rec.by_variant) {
      out += setting + "," + variant_label(vr.variant) + "," + std::to_string(rec.rep) + ",0,";
      out += pair_cols(vr.psi00) + pair_cols(vr.psi10) + pair_cols(vr.psi11);
      out += ci_cols(vr.ve) + ci_cols(vr.indirect) + ci_cols(vr.direct) + ci_cols(vr.pm);
      out += std::string(",") + (vr.clipped ? "1" : "0") + "," + (vr.irls_fallback ? "1" : "0") +
             "," + (vr.unstable_log ? "1" : "0") + "\n";
    }
  }
  return out;
}

void write_metrics_csv(const std::string& path, const ReplicationResult& res) {
  write_text(path, metrics_csv(res));
}

void write_rep_csv(const std::string& path, const ReplicationResult& res) {
  write_text(path, rep_csv(res));
}

}  // namespace natmed
