#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edmgps {

enum class ErrorKind {
  BadShape,
  BadInput,
  SingularGeometry,
  NotAnEdm,
  DegenerateCoefficient,
  PoleEvaluation,
  NoConvergence,
  GaleInfeasible,
  GeometryRejection,
  NegativeSquare,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadShape: return "BadShape";
    case ErrorKind::BadInput: return "BadInput";
    case ErrorKind::SingularGeometry: return "SingularGeometry";
    case ErrorKind::NotAnEdm: return "NotAnEdm";
    case ErrorKind::DegenerateCoefficient: return "DegenerateCoefficient";
    case ErrorKind::PoleEvaluation: return "PoleEvaluation";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::GaleInfeasible: return "GaleInfeasible";
    case ErrorKind::GeometryRejection: return "GeometryRejection";
    case ErrorKind::NegativeSquare: return "NegativeSquare";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace edmgps
