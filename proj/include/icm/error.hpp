#pragma once

#include <stdexcept>
#include <string>

namespace icm {

/// Base of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, shapes or option values.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A dataset violates one of its invariants.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// CSV could not be read or parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Unknown or inconsistent configuration (kernel ids, DGP ids, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Instrument scaling matrix could not be factorized.
class ScalingError : public Error {
 public:
  using Error::Error;
};

/// Input with zero variation where variation is required.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// An estimator is not computable for the design (order condition, scope).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure produced a result that cannot be trusted.
class DiagnosticError : public Error {
 public:
  using Error::Error;
};

/// E_n[h_n' X] is singular or too ill-conditioned to solve.
class IdentificationError : public Error {
 public:
  IdentificationError(const std::string& what, double cond, double min_singular)
      : Error(what), cond_(cond), min_singular_(min_singular) {}

  double cond() const noexcept { return cond_; }
  double min_singular_value() const noexcept { return min_singular_; }

 private:
  double cond_;
  double min_singular_;
};

}  // namespace icm
