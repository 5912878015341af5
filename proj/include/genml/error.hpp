#pragma once

#include <stdexcept>
#include <string>

namespace genml {

// Configuration or schema problem: a referenced column is missing, an option
// is out of range, a file cannot be parsed.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The data violate a domain invariant (non-binary treatment, empty arm,
// overlap violated within a stratum, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical procedure failed (rank deficiency, non-convergence, too many
// failed splits).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace genml
