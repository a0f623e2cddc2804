#pragma once

#include <stdexcept>
#include <string>

namespace natmed {

// Bad configuration or malformed request; maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input data violating the model invariants; maps to CLI exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// A regression could not be fit (singular design beyond rescue, empty
// subgroup, ...).  Propagates; replication harness counts these per rep.
struct FitError : std::runtime_error {
  explicit FitError(const std::string& msg) : std::runtime_error(msg) {}
};

// The requested parameter cannot be estimated from the data at hand
// (e.g. an arm with no phase-two rows); maps to CLI exit code 4.
struct InestimableError : std::runtime_error {
  explicit InestimableError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace natmed
