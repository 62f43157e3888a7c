#pragma once

#include <stdexcept>
#include <string>

namespace topo {

// Raised when a caller breaks a documented precondition (shape mismatch,
// self-pair, out-of-range index, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid configuration or parameters discovered before any compute.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data (dataset files, csv rows, ...).
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A previously written artifact (checkpoint, sheet file) failed validation.
class CorruptArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TOPO_REQUIRE(cond, msg)                                   \
  do {                                                            \
    if (!(cond)) throw ::topo::ContractViolation(std::string(msg)); \
  } while (0)

}  // namespace topo
