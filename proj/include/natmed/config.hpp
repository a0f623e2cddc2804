#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "natmed/data.hpp"
#include "natmed/replicate.hpp"

namespace natmed {

inline constexpr const char* kVersion = "1.0.0";

// Everything a run needs beyond the scenario itself: the data schema and
// file paths used by the estimation command, and the output directory.
struct RunConfig {
  ScenarioConfig scenario;

  std::vector<std::string> w_cols;  // covariate column names in user CSV data
  std::string a_col = "A";
  std::string r_col = "R";
  std::string s_col = "S";
  std::string c_col = "C";
  std::string y_col = "Y";
  std::string gr_col;  // optional per-row sampling-probability column

  std::string data_path;
  std::string design_gr_path;  // optional stratum-probability table
  std::string out_dir = ".";
};

// Flat key-value text with one optional section per nuisance regression.
// Unknown keys and malformed values raise ConfigError naming the line.
// parse -> serialize -> parse is the identity; serialization emits the
// resolved normal form (per-nuisance sections appear whenever the strategy
// no longer equals a named preset).
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& rc);

CsvSchema config_schema(const RunConfig& rc);

// FNV-1a 64-bit content digests for the manifest.
std::uint64_t fnv1a64(const std::string& bytes);
std::string fnv1a64_hex(const std::string& bytes);
std::string file_digest_hex(const std::string& path);

struct RunManifest {
  std::string version = kVersion;
  std::string command;  // simulate | estimate | truth
  double wall_seconds = 0;
  int replication_failures = 0;
  std::vector<std::pair<std::string, std::string>> digests;  // file -> hex digest
  std::string config_text;  // serialized configuration as run
};

std::string format_manifest(const RunManifest& m);
void write_manifest(const std::string& path, const RunManifest& m);

}  // namespace natmed
