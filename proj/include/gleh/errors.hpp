#pragma once

#include <stdexcept>
#include <string>

namespace gleh {

/// Failure kinds raised by the library. Each maps to one CLI exit class.
enum class ErrorCode {
  // configuration
  ConfigParseError,
  // model validation
  ModelValidationError,
  DimensionMismatch,
  NotPositiveStable,
  InvalidTriple,
  SingularEffectiveConstant,
  NonPositiveRate,
  CriticalDamping,
  ZeroFrequency,
  DomainViolation,
  WrongNoiseKind,
  InsufficientModes,
  // numerical
  SingularSystem,
  Overflow,
  SingularTheta,
  JacobianUnavailable,
  ZeroDamping,
  DegenerateR,
  DegenerateDenominator,
  UnstableStep,
  InsufficientSamples,
  QuadratureFailure,
  NumericalFailure,
};

enum class ErrorClass { config, model, numerical };

inline const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigParseError: return "ConfigParseError";
    case ErrorCode::ModelValidationError: return "ModelValidationError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveStable: return "NotPositiveStable";
    case ErrorCode::InvalidTriple: return "InvalidTriple";
    case ErrorCode::SingularEffectiveConstant: return "SingularEffectiveConstant";
    case ErrorCode::NonPositiveRate: return "NonPositiveRate";
    case ErrorCode::CriticalDamping: return "CriticalDamping";
    case ErrorCode::ZeroFrequency: return "ZeroFrequency";
    case ErrorCode::DomainViolation: return "DomainViolation";
    case ErrorCode::WrongNoiseKind: return "WrongNoiseKind";
    case ErrorCode::InsufficientModes: return "InsufficientModes";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::SingularTheta: return "SingularTheta";
    case ErrorCode::JacobianUnavailable: return "JacobianUnavailable";
    case ErrorCode::ZeroDamping: return "ZeroDamping";
    case ErrorCode::DegenerateR: return "DegenerateR";
    case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::UnstableStep: return "UnstableStep";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

inline ErrorClass error_class(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigParseError:
      return ErrorClass::config;
    case ErrorCode::ModelValidationError:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::NotPositiveStable:
    case ErrorCode::InvalidTriple:
    case ErrorCode::SingularEffectiveConstant:
    case ErrorCode::NonPositiveRate:
    case ErrorCode::CriticalDamping:
    case ErrorCode::ZeroFrequency:
    case ErrorCode::DomainViolation:
    case ErrorCode::WrongNoiseKind:
    case ErrorCode::InsufficientModes:
      return ErrorClass::model;
    default:
      return ErrorClass::numerical;
  }
}

/// Library exception carrying a stable error code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorClass kind() const noexcept { return error_class(code_); }

 private:
  ErrorCode code_;
};

}  // namespace gleh
