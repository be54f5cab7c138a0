#pragma once

#include <stdexcept>
#include <string>

namespace ep {

// Config problems map to exit code 2, numerical trouble to 3.
enum class ErrorKind {
  Config,
  NonPositiveRadius,
  OrderCap,
  FieldUnavailable,
  BadTemperature,
  TablesStale,
  InterpolationOutOfRange,
  SolverDiverged,
  NullComponent,
  BoundViolated,
  NotDecaying,
  Cfl,
  ProjectionFailure,
  IncompleteStack,
  RouteMismatch,
  QuadratureBudget,
  BlowUp,
  Unsupported
};

inline const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::NonPositiveRadius: return "NonPositiveRadius";
    case ErrorKind::OrderCap: return "OrderCap";
    case ErrorKind::FieldUnavailable: return "FieldUnavailable";
    case ErrorKind::BadTemperature: return "BadTemperature";
    case ErrorKind::TablesStale: return "TablesStale";
    case ErrorKind::InterpolationOutOfRange: return "InterpolationOutOfRange";
    case ErrorKind::SolverDiverged: return "SolverDiverged";
    case ErrorKind::NullComponent: return "NullComponent";
    case ErrorKind::BoundViolated: return "BoundViolated";
    case ErrorKind::NotDecaying: return "NotDecaying";
    case ErrorKind::Cfl: return "CFL";
    case ErrorKind::ProjectionFailure: return "ProjectionFailure";
    case ErrorKind::IncompleteStack: return "IncompleteStack";
    case ErrorKind::RouteMismatch: return "RouteMismatch";
    case ErrorKind::QuadratureBudget: return "QuadratureBudget";
    case ErrorKind::BlowUp: return "BlowUp";
    case ErrorKind::Unsupported: return "Unsupported";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind k, const std::string& what)
      : std::runtime_error(std::string(kind_name(k)) + ": " + what), kind_(k) {}
  ErrorKind kind() const { return kind_; }
  bool is_config() const { return kind_ == ErrorKind::Config || kind_ == ErrorKind::BadTemperature; }

 private:
  ErrorKind kind_;
};

}  // namespace ep
