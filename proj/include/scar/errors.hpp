#pragma once

#include <stdexcept>
#include <string>

namespace scar {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

// insufficient data, degenerate distributions, infeasible partitions
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  FormatError(const std::string& what, long long offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset(offset) {}
  long long offset;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace scar
