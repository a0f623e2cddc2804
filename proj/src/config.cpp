#include "natmed/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "natmed/errors.hpp"

namespace natmed {

namespace {

[[noreturn]] void bad(int line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else cur += c;
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

long long to_int(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size()) bad(line, "trailing characters in integer '" + v + "'");
    return x;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    bad(line, "not an integer: '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) bad(line, "trailing characters in integer '" + v + "'");
    return x;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    bad(line, "not an unsigned integer: '" + v + "'");
  }
}

double to_double(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) bad(line, "trailing characters in number '" + v + "'");
    return x;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    bad(line, "not a number: '" + v + "'");
  }
}

bool to_bool(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad(line, "not a boolean: '" + v + "'");
}

const char* kind_name(LearnerKind k) {
  switch (k) {
    case LearnerKind::intercept_only: return "intercept_only";
    case LearnerKind::glm_main_terms: return "glm_main_terms";
    case LearnerKind::glm_all_interactions: return "glm_all_interactions";
    case LearnerKind::saturated: return "saturated";
    default: return "ensemble";
  }
}

LearnerKind kind_from(const std::string& v, int line) {
  if (v == "intercept_only") return LearnerKind::intercept_only;
  if (v == "glm_main_terms") return LearnerKind::glm_main_terms;
  if (v == "glm_all_interactions") return LearnerKind::glm_all_interactions;
  if (v == "saturated") return LearnerKind::saturated;
  if (v == "ensemble") return LearnerKind::ensemble;
  bad(line, "unknown learner '" + v + "'");
}

const std::vector<std::string>& section_names() {
  static const std::vector<std::string> names = {"ga", "gc",   "gr",   "gaws", "qy",
                                                 "qqy", "qtqy", "qtqt", "qd",   "qtd"};
  return names;
}

NuisanceChoice* section_of(NuisanceStrategy& s, const std::string& name) {
  if (name == "ga") return &s.ga;
  if (name == "gc") return &s.gc;
  if (name == "gr") return &s.gr;
  if (name == "gaws") return &s.gaws;
  if (name == "qy") return &s.qy;
  if (name == "qqy") return &s.qqy;
  if (name == "qtqy") return &s.qtqy;
  if (name == "qtqt") return &s.qtqt;
  if (name == "qd") return &s.qd;
  if (name == "qtd") return &s.qtd;
  return nullptr;
}

std::string num17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + v[i];
  return out;
}

// Keys seen inside one nuisance section, to validate mode/key consistency
// after the whole section is read.
struct SectionSeen {
  bool mode = false, learner = false, members = false, cv_folds = false;
  bool known_value = false, from_design = false;
  int line = 0;
};

void check_section(const std::string& name, const NuisanceChoice& c, const SectionSeen& seen) {
  if ((seen.learner || seen.members || seen.cv_folds) && c.mode != NuisanceMode::learner)
    bad(seen.line, "[" + name + "] learner keys require mode = learner");
  if ((seen.members || seen.cv_folds) && c.learner.kind != LearnerKind::ensemble)
    bad(seen.line, "[" + name + "] members/cv_folds require learner = ensemble");
  if (seen.known_value && c.mode != NuisanceMode::known)
    bad(seen.line, "[" + name + "] known_value requires mode = known");
  if (seen.from_design && c.mode != NuisanceMode::known)
    bad(seen.line, "[" + name + "] from_design requires mode = known");
  if (c.mode == NuisanceMode::known && !c.from_design && !std::isfinite(c.known_value))
    bad(seen.line, "[" + name + "] known mode needs known_value or from_design");
  if (c.mode == NuisanceMode::learner && c.learner.kind == LearnerKind::ensemble &&
      c.learner.ensemble_members.empty())
    bad(seen.line, "[" + name + "] ensemble without members");
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig rc;
  ScenarioConfig& sc = rc.scenario;

  std::string strategy_value;
  int strategy_line = 0;
  bool any_section = false;
  NuisanceStrategy patch;  // nuisance overrides collected before the base is known
  std::vector<std::pair<std::string, SectionSeen>> seen_sections;

  std::string section;  // empty = top level
  NuisanceChoice* cur = nullptr;
  SectionSeen* cur_seen = nullptr;

  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string l = raw;
    std::size_t hash = l.find('#');
    if (hash != std::string::npos) l = l.substr(0, hash);
    l = trim(l);
    if (l.empty()) continue;

    if (l.front() == '[') {
      if (l.back() != ']') bad(line, "unterminated section header");
      section = trim(l.substr(1, l.size() - 2));
      cur = section_of(patch, section);
      if (!cur) bad(line, "unknown section [" + section + "]");
      any_section = true;
      seen_sections.emplace_back(section, SectionSeen{});
      cur_seen = &seen_sections.back().second;
      cur_seen->line = line;
      continue;
    }

    std::size_t eq = l.find('=');
    if (eq == std::string::npos) bad(line, "expected key = value");
    const std::string key = trim(l.substr(0, eq));
    const std::string val = trim(l.substr(eq + 1));
    if (key.empty()) bad(line, "empty key");
    if (val.empty()) bad(line, "empty value for '" + key + "'");

    if (!section.empty()) {
      cur_seen->line = line;
      if (key == "mode") {
        cur_seen->mode = true;
        if (val == "known") cur->mode = NuisanceMode::known;
        else if (val == "learner") cur->mode = NuisanceMode::learner;
        else if (val == "intercept_only") cur->mode = NuisanceMode::intercept_only;
        else bad(line, "unknown mode '" + val + "'");
      } else if (key == "learner") {
        cur_seen->learner = true;
        cur->learner.kind = kind_from(val, line);
      } else if (key == "members") {
        cur_seen->members = true;
        cur->learner.ensemble_members.clear();
        for (const std::string& m : split_list(val)) {
          LearnerKind k = kind_from(m, line);
          if (k == LearnerKind::ensemble) bad(line, "ensembles cannot nest");
          LearnerSpec ls;
          ls.kind = k;
          cur->learner.ensemble_members.push_back(ls);
        }
      } else if (key == "cv_folds") {
        cur_seen->cv_folds = true;
        long long f = to_int(val, line);
        if (f < 2) bad(line, "cv_folds must be at least 2");
        cur->learner.cv_folds = static_cast<int>(f);
      } else if (key == "known_value") {
        cur_seen->known_value = true;
        cur->known_value = to_double(val, line);
      } else if (key == "from_design") {
        cur_seen->from_design = true;
        cur->from_design = to_bool(val, line);
      } else {
        bad(line, "unknown key '" + key + "' in section [" + section + "]");
      }
      continue;
    }

    if (key == "label") sc.label = val;
    else if (key == "dgp") {
      try {
        sc.dgp = dgp_from_name(val);
      } catch (const ConfigError& e) {
        bad(line, e.what());
      }
    } else if (key == "n") sc.n = static_cast<int>(to_int(val, line));
    else if (key == "reps") sc.reps = static_cast<int>(to_int(val, line));
    else if (key == "seed") sc.seed = to_u64(val, line);
    else if (key == "alpha") sc.alpha = to_double(val, line);
    else if (key == "estimators") {
      sc.estimators.clear();
      for (const std::string& e : split_list(val)) {
        try {
          sc.estimators.push_back(variant_from_name(e));
        } catch (const ConfigError& ex) {
          bad(line, ex.what());
        }
      }
      if (sc.estimators.empty()) bad(line, "empty estimator list");
    } else if (key == "strategy") {
      strategy_value = val;
      strategy_line = line;
    } else if (key == "p_min") sc.p_min = to_double(val, line);
    else if (key == "ci_level") sc.ci_level = to_double(val, line);
    else if (key == "threads") sc.threads = static_cast<int>(to_int(val, line));
    else if (key == "truth_draws") sc.truth_draws = to_int(val, line);
    else if (key == "w_cols") rc.w_cols = split_list(val);
    else if (key == "a_col") rc.a_col = val;
    else if (key == "r_col") rc.r_col = val;
    else if (key == "s_col") rc.s_col = val;
    else if (key == "c_col") rc.c_col = val;
    else if (key == "y_col") rc.y_col = val;
    else if (key == "gr_col") rc.gr_col = val;
    else if (key == "data") rc.data_path = val;
    else if (key == "design_gr") rc.design_gr_path = val;
    else if (key == "out") rc.out_dir = val;
    else bad(line, "unknown key '" + key + "'");
  }

  // Resolve the strategy: a named preset, optionally patched by sections.
  if (strategy_value.empty()) strategy_value = sc.strategy_preset;
  NuisanceStrategy base;
  if (strategy_value != "inline") {
    try {
      base = preset_strategy(strategy_value);
    } catch (const ConfigError& e) {
      bad(strategy_line > 0 ? strategy_line : 1, e.what());
    }
  }
  sc.strategy_preset = strategy_value;
  if (any_section || strategy_value == "inline") {
    sc.use_inline_strategy = true;
    for (const auto& [name, seen] : seen_sections) {
      NuisanceChoice* dst = section_of(base, name);
      NuisanceChoice* src = section_of(patch, name);
      *dst = *src;
      check_section(name, *dst, seen);
    }
    sc.strategy = base;
  }
  return rc;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& rc) {
  const ScenarioConfig& sc = rc.scenario;
  std::string out;
  if (!sc.label.empty()) out += "label = " + sc.label + "\n";
  out += "dgp = " + dgp_name(sc.dgp) + "\n";
  out += "n = " + std::to_string(sc.n) + "\n";
  out += "reps = " + std::to_string(sc.reps) + "\n";
  out += "seed = " + std::to_string(sc.seed) + "\n";
  out += "alpha = " + num17(sc.alpha) + "\n";
  std::vector<std::string> ests;
  for (Variant v : sc.estimators) ests.push_back(variant_label(v));
  out += "estimators = " + join(ests) + "\n";
  out += "strategy = " + (sc.strategy_preset.empty() ? "inline" : sc.strategy_preset) + "\n";
  out += "p_min = " + num17(sc.p_min) + "\n";
  out += "ci_level = " + num17(sc.ci_level) + "\n";
  out += "threads = " + std::to_string(sc.threads) + "\n";
  out += "truth_draws = " + std::to_string(sc.truth_draws) + "\n";
  if (!rc.w_cols.empty()) out += "w_cols = " + join(rc.w_cols) + "\n";
  if (rc.a_col != "A") out += "a_col = " + rc.a_col + "\n";
  if (rc.r_col != "R") out += "r_col = " + rc.r_col + "\n";
  if (rc.s_col != "S") out += "s_col = " + rc.s_col + "\n";
  if (rc.c_col != "C") out += "c_col = " + rc.c_col + "\n";
  if (rc.y_col != "Y") out += "y_col = " + rc.y_col + "\n";
  if (!rc.gr_col.empty()) out += "gr_col = " + rc.gr_col + "\n";
  if (!rc.data_path.empty()) out += "data = " + rc.data_path + "\n";
  if (!rc.design_gr_path.empty()) out += "design_gr = " + rc.design_gr_path + "\n";
  if (rc.out_dir != ".") out += "out = " + rc.out_dir + "\n";

  if (sc.use_inline_strategy) {
    NuisanceStrategy s = sc.strategy;  // non-const access for section_of
    for (const std::string& name : section_names()) {
      const NuisanceChoice& c = *section_of(s, name);
      out += "[" + name + "]\n";
      switch (c.mode) {
        case NuisanceMode::known:
          out += "mode = known\n";
          if (c.from_design) out += "from_design = true\n";
          else out += "known_value = " + num17(c.known_value) + "\n";
          break;
        case NuisanceMode::intercept_only:
          out += "mode = intercept_only\n";
          break;
        case NuisanceMode::learner:
          out += "mode = learner\n";
          out += std::string("learner = ") + kind_name(c.learner.kind) + "\n";
          if (c.learner.kind == LearnerKind::ensemble) {
            std::vector<std::string> ms;
            for (const LearnerSpec& m : c.learner.ensemble_members)
              ms.push_back(kind_name(m.kind));
            out += "members = " + join(ms) + "\n";
            out += "cv_folds = " + std::to_string(c.learner.cv_folds) + "\n";
          }
          break;
      }
    }
  }
  return out;
}

CsvSchema config_schema(const RunConfig& rc) {
  CsvSchema s;
  s.w_cols = rc.w_cols;
  s.a_col = rc.a_col;
  s.r_col = rc.r_col;
  s.s_col = rc.s_col;
  s.c_col = rc.c_col;
  s.y_col = rc.y_col;
  s.gr_col = rc.gr_col;
  return s;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string fnv1a64_hex(const std::string& bytes) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

std::string file_digest_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw std::runtime_error("cannot read " + path + " for digest");
  std::stringstream ss;
  ss << in.rdbuf();
  return fnv1a64_hex(ss.str());
}

std::string format_manifest(const RunManifest& m) {
  std::string out = "# run manifest\n";
  out += "version = " + m.version + "\n";
  out += "command = " + m.command + "\n";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3f", m.wall_seconds);
  out += std::string("wall_seconds = ") + buf + "\n";
  out += "replication_failures = " + std::to_string(m.replication_failures) + "\n";
  for (const auto& [file, hex] : m.digests) out += "digest " + file + " = " + hex + "\n";
  out += "# configuration\n";
  out += m.config_text;
  return out;
}

void write_manifest(const std::string& path, const RunManifest& m) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  const std::string text = format_manifest(m);
  std::fputs(text.c_str(), f);
  if (std::fclose(f) != 0) throw std::runtime_error("failed to write " + path);
}

}  // namespace natmed
