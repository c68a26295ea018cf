#pragma once

#include <stdexcept>
#include <string>

namespace cdantzig {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ValidationKind {
  dimension,
  diagonal_nonzero,
  singular_structure,
  not_symmetric,
  not_psd,
  response_intervention,
  unknown_name,
  unknown_environment,
  bad_value,
};

inline const char* to_string(ValidationKind kind) {
  switch (kind) {
    case ValidationKind::dimension: return "dimension";
    case ValidationKind::diagonal_nonzero: return "diagonal_nonzero";
    case ValidationKind::singular_structure: return "singular_structure";
    case ValidationKind::not_symmetric: return "not_symmetric";
    case ValidationKind::not_psd: return "not_psd";
    case ValidationKind::response_intervention: return "response_intervention";
    case ValidationKind::unknown_name: return "unknown_name";
    case ValidationKind::unknown_environment: return "unknown_environment";
    case ValidationKind::bad_value: return "bad_value";
  }
  return "unknown";
}

/// Input violates a documented precondition or invariant.
class ValidationError : public Error {
 public:
  ValidationError(ValidationKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ValidationKind kind() const noexcept { return kind_; }

 private:
  ValidationKind kind_;
};

/// A computation could not be carried out in floating point.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The Gram-shift matrix is singular or too ill-conditioned to invert.
/// Carries the condition estimate that triggered the failure.
class SingularGramError : public NumericalError {
 public:
  SingularGramError(double condition, const std::string& what)
      : NumericalError(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

/// The simplex solver exhausted its pivot budget.
class SolverFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Coordinate descent did not converge within its iteration cap.
class NonConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// The Wald ratio has a vanishing denominator: the instrument does not shift
/// the mean of X.
class DegenerateInstrumentError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdantzig
