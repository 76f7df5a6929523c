#pragma once

#include <stdexcept>
#include <string>

namespace mcps {

/// Malformed or out-of-contract arguments (dimension mismatch, theta outside
/// the box, bad probabilities).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// MFMC was asked to rebuild more transitions than the dataset holds.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mathematical premise does not hold (contraction condition of the bias
/// bounds, sample variance with a single sample, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Rank-one inverse update whose denominator vanished.
class DegenerateUpdateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedEnvironmentError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace mcps
